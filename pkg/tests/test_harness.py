"""Harness drivers and CLI: reports, verdicts, fuzzing, exit codes."""

import csv

import pytest

from ghostsim import RunConfig, SimTimeout
from ghostsim.cli import main
from ghostsim.gadgets import GADGETS, Gadget
from ghostsim import harness

SIMPLE = "li r1, 5\nadd r2, r1, r1\nst r2, r0, 0x100\nhalt\n"


class TestRun:
    def test_reports_are_reproducible(self):
        _, a = harness.run([SIMPLE], RunConfig())
        _, b = harness.run([SIMPLE], RunConfig())
        assert a == b
        assert a.to_text() == b.to_text()

    def test_report_fields(self):
        m, rep = harness.run([SIMPLE], RunConfig())
        assert rep.schema == 1
        assert rep.mode == "ghostminion"
        assert rep.commits == 4
        assert rep.cycles == m.cycle
        assert rep.ipc == pytest.approx(4 / rep.cycles)
        assert len(rep.digest) == 64
        assert all(v >= 0 for v in rep.counters.values())

    def test_digest_tracks_timing(self):
        _, a = harness.run([SIMPLE], RunConfig())
        _, b = harness.run([SIMPLE], RunConfig(warm_icache=True))
        assert a.digest != b.digest

    def test_csv_output(self, tmp_path):
        _, rep = harness.run([SIMPLE], RunConfig())
        out = tmp_path / "c.csv"
        rep.write_csv(out)
        rows = dict(csv.reader(out.open()))
        assert rows["counter"] == "value"
        assert int(rows["cycles"]) == rep.cycles
        assert "timeguard_blocks" in rows

    def test_timeout_raises(self):
        with pytest.raises(SimTimeout):
            harness.run(["loop:\njmp loop\n"], RunConfig(max_cycles=50))


class TestDifferential:
    def test_secret_free_gadget_is_safe_everywhere(self):
        g = Gadget("noop", lambda s: SIMPLE, lambda m: 0, secrets=(0, 1, 2))
        for mode in ("unsafe", "flush_only", "ghostminion"):
            assert harness.run_differential(g, RunConfig(mode=mode)).verdict == "SAFE"

    def test_structurally_divergent_gadget_rejected(self):
        g = Gadget("bad", lambda s: "nop\n" * (s + 1) + "halt\n",
                   lambda m: 0, secrets=(0, 3))
        res = harness.run_differential(g, RunConfig())
        assert res.verdict == "ERROR"
        assert "structurally" in res.detail

    def test_leak_reports_first_divergence(self):
        res = harness.run_differential(GADGETS["spectre_v1"],
                                       RunConfig(mode="unsafe"))
        assert res.verdict == "LEAKS"
        assert res.divergence is not None
        secret, cid, idx, ea, eb = res.divergence
        assert ea[:3] == eb[:3]      # same instruction, different timing


class TestAblation:
    def test_no_misprediction_program_passes_trivially(self):
        res = harness.run_ablation([SIMPLE], RunConfig())
        assert res.verdict == "PASS" and res.pure

    def test_fuzz_zero_count_vacuous(self):
        assert harness.fuzz_programs(0, RunConfig()) == (0, 0, None)

    def test_fuzz_deterministic_per_seed(self):
        a = harness.fuzz_programs(5, RunConfig(), seed=42)
        b = harness.fuzz_programs(5, RunConfig(), seed=42)
        assert a == b

    def test_generator_output_is_seed_dependent(self):
        import random
        texts = {harness._gen_program(random.Random(s)) for s in range(8)}
        assert len(texts) == 8


class TestCli:
    def _emit(self, tmp_path, name="spectre_v1"):
        assert main(["gadgets", "emit", name, "--dir", str(tmp_path)]) == 0
        return str(tmp_path / f"{name}.gasm")

    def test_run_ok(self, tmp_path, capsys):
        p = tmp_path / "p.gasm"
        p.write_text(SIMPLE)
        assert main(["run", str(p)]) == 0
        out = capsys.readouterr().out
        assert '"schema": 1' in out and '"digest"' in out

    def test_run_csv(self, tmp_path):
        p = tmp_path / "p.gasm"
        p.write_text(SIMPLE)
        out = tmp_path / "c.csv"
        assert main(["run", str(p), "--csv", str(out)]) == 0
        assert out.exists()

    def test_diff_exit_codes(self):
        assert main(["diff", "spectre_v1", "--mode", "ghostminion"]) == 0
        assert main(["diff", "spectre_v1", "--mode", "unsafe"]) == 1

    def test_ablate_exit_codes(self, tmp_path):
        g = self._emit(tmp_path)
        assert main(["ablate", g, "--mode", "ghostminion"]) == 0
        assert main(["ablate", g, "--mode", "unsafe"]) == 1

    def test_fuzz_exit_codes(self):
        assert main(["fuzz", "10", "--seed", "0"]) == 0
        assert main(["fuzz", "100", "--seed", "0", "--mode", "unsafe"]) == 1

    def test_usage_errors(self, tmp_path, capsys):
        assert main(["frobnicate"]) == 2
        assert main(["diff", "not_a_gadget"]) == 2
        assert main(["run", str(tmp_path / "missing.gasm")]) == 2
        bad = tmp_path / "bad.gasm"
        bad.write_text("frob r1, r2\n")
        assert main(["run", str(bad)]) == 2
        badcfg = tmp_path / "bad.cfg"
        badcfg.write_text("rob = banana\n")
        p = tmp_path / "p.gasm"
        p.write_text(SIMPLE)
        assert main(["run", str(p), "--config", str(badcfg)]) == 2

    def test_timeout_exit_code(self, tmp_path):
        p = tmp_path / "p.gasm"
        p.write_text("loop:\njmp loop\n")
        assert main(["run", str(p), "--max-cycles", "100"]) == 3

    def test_config_file_round_trip(self, tmp_path):
        cfgf = tmp_path / "c.cfg"
        cfgf.write_text(RunConfig(mode="unsafe").to_text())
        p = tmp_path / "p.gasm"
        p.write_text(SIMPLE)
        assert main(["run", str(p), "--config", str(cfgf)]) == 0

    def test_gadgets_list(self, capsys):
        assert main(["gadgets", "list"]) == 0
        out = capsys.readouterr().out
        for name in GADGETS:
            assert name in out

    def test_emitted_two_core_gadget_runs(self, tmp_path):
        assert main(["gadgets", "emit", "spectre_prime",
                     "--dir", str(tmp_path), "--secret", "7"]) == 0
        a = tmp_path / "spectre_prime.core0.gasm"
        v = tmp_path / "spectre_prime.core1.gasm"
        assert a.exists() and v.exists()
        assert main(["run", str(a), str(v)]) == 0
