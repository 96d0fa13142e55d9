import numpy as np
import pytest

from varred.bench_cli import (
    ExperimentConfig,
    conditioning_report,
    emit_history_csv,
    main,
    parse_config,
    parse_history_csv,
    run_experiment,
    run_table1_sweep,
)
from varred.errors import ConfigError, VarredError
from varred.optimizers import ConvergenceRecord, RecordRow

SMALL_QUADRATIC = """
[problem]
kind = quadratic
n_x = 4
n_y = 6
spec_x_lo = 1.0
spec_x_hi = 5.0
spec_y_lo = 1.0
spec_y_hi = 40.0
coupling_eps = 0.1
seed = 3

[method]
name = pgd-exact
eliminate = full

[stop]
rel_grad_tol = 1e-6
max_iter = 5000
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_QUADRATIC)
    cfg = parse_config(path)
    cfg.out_dir = str(tmp_path / "runs")
    return cfg


class TestConfigParsing:
    def test_round_trip_values(self, small_cfg):
        assert small_cfg.kind == "quadratic"
        assert small_cfg.n_x == 4 and small_cfg.n_y == 6
        assert small_cfg.coupling_eps == pytest.approx(0.1)
        assert small_cfg.method == "pgd-exact"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[problem]\nkind = quadratic\nbogus_key = 1\n")
        with pytest.raises(ConfigError, match=r"bogus_key.*\[problem\]|\[problem\].*bogus_key"):
            parse_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[mystery]\nfoo = 1\n")
        with pytest.raises(ConfigError, match="mystery"):
            parse_config(path)

    def test_bad_value_type(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[problem]\nn_x = forty\n")
        with pytest.raises(ConfigError, match="n_x"):
            parse_config(path)

    def test_bad_method_name(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(method="sgd").validate()

    def test_bad_scope(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(eliminate="first:3").validate()
        assert ExperimentConfig(eliminate="last:7").scope_n_r == 7


class TestHistoryCSV:
    def _record(self, rows=2):
        rec = ConvergenceRecord()
        rng = np.random.default_rng(0)
        for k in range(rows):
            rec.rows.append(RecordRow(
                iteration=k, fval=float(rng.standard_normal()),
                grad_norm=abs(float(rng.standard_normal())),
                rel_grad_norm=1.0 if k == 0 else float(rng.uniform()),
                step=float(rng.uniform()), inner_iters=int(rng.integers(0, 9)),
                cum_linear_solves=k * 3, elapsed_s=float(rng.uniform())))
        return rec

    def test_header_is_bit_exact(self, tmp_path):
        path = tmp_path / "h.csv"
        emit_history_csv(self._record(1), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,fval,grad_norm,rel_grad_norm,step,inner_iters,cum_linear_solves,elapsed_s"

    def test_single_row_record_two_lines(self, tmp_path):
        path = tmp_path / "h.csv"
        emit_history_csv(self._record(1), path)
        text = path.read_text()
        assert text.endswith("\n")
        assert len(text.splitlines()) == 2

    def test_round_trip_is_exact(self, tmp_path):
        rec = self._record(7)
        path = tmp_path / "h.csv"
        emit_history_csv(rec, path)
        back = parse_history_csv(path)
        assert len(back.rows) == len(rec.rows)
        for r1, r2 in zip(rec.rows, back.rows):
            assert r1 == r2

    def test_empty_record_rejected(self, tmp_path):
        with pytest.raises(VarredError):
            emit_history_csv(ConvergenceRecord(), tmp_path / "e.csv")

    def test_unwritable_path_has_context(self):
        with pytest.raises(VarredError, match="no/such/dir"):
            emit_history_csv(self._record(1), "no/such/dir/h.csv")


class TestRunExperiment:
    def test_summary_consistent_with_record(self, small_cfg):
        summary, record = run_experiment(small_cfg, quiet=True)
        assert summary.status == "converged"
        assert summary.iterations == len(record.rows) - 1
        assert summary.final_rel_grad <= small_cfg.rel_grad_tol
        assert record.rows[0].rel_grad_norm == 1.0

    def test_history_and_log_written(self, small_cfg, tmp_path):
        summary, _ = run_experiment(small_cfg, quiet=True)
        out = tmp_path / "runs"
        csvs = list(out.glob("*.csv"))
        assert len(csvs) == 1
        log_lines = (out / "runs.log").read_text().splitlines()
        assert len(log_lines) == 1
        fields = log_lines[0].split("\t")
        assert len(fields) == 8
        assert fields[0] == "pgd-exact" and fields[-1] == "converged"

    def test_determinism_modulo_elapsed(self, small_cfg, tmp_path):
        def strip_elapsed(path):
            lines = path.read_text().splitlines()
            return [",".join(line.split(",")[:-1]) for line in lines]

        run_experiment(small_cfg, quiet=True)
        first = strip_elapsed(next((tmp_path / "runs").glob("*.csv")))
        import shutil
        shutil.rmtree(tmp_path / "runs")
        run_experiment(small_cfg, quiet=True)
        second = strip_elapsed(next((tmp_path / "runs").glob("*.csv")))
        assert first == second

    def test_max_iter_status(self, small_cfg):
        small_cfg.max_iter = 2
        small_cfg.method = "gd"
        summary, record = run_experiment(small_cfg, quiet=True)
        assert summary.status == "max-iter"
        assert record is not None

    @pytest.mark.parametrize("method", ["gd", "pgd-exact", "pgd-inexact", "altmin", "newton-elim"])
    def test_every_method_runs_on_quadratic(self, small_cfg, method):
        small_cfg.method = method
        summary, _ = run_experiment(small_cfg, quiet=True)
        assert summary.status == "converged"
        assert summary.final_rel_grad <= small_cfg.rel_grad_tol

    def test_partial_scope_runs(self, small_cfg):
        small_cfg.eliminate = "last:3"
        summary, _ = run_experiment(small_cfg, quiet=True)
        assert summary.status == "converged"
        assert summary.n_elim == 3


class TestConditioningReport:
    def test_values_and_ordering(self, small_cfg):
        rep = conditioning_report(small_cfg)
        assert rep.kappa_schur <= rep.kappa_full * (1 + 1e-9)
        assert rep.kappa_retained_block == pytest.approx(5.0, rel=5e-2)

    def test_partial_scope_between_full_and_total(self, small_cfg):
        full = conditioning_report(small_cfg)
        small_cfg.eliminate = "last:3"
        partial = conditioning_report(small_cfg)
        assert full.kappa_schur <= partial.kappa_schur * (1 + 1e-9)
        assert partial.kappa_schur <= full.kappa_full * (1 + 1e-9)

    def test_rejected_for_logsumexp(self):
        cfg = ExperimentConfig(kind="logsumexp", n=50, n_el=5)
        with pytest.raises(ConfigError):
            conditioning_report(cfg)


class TestSweep:
    def test_labels_and_cells(self, tmp_path):
        cfg = ExperimentConfig(kind="logsumexp", n=60, n_el=4,
                               out_dir=str(tmp_path), max_iter=20000)
        table = run_table1_sweep(cfg, [4, 8])
        assert set(table.keys()) == {"gd", "pgd-exact", "pgd-inexact"}
        assert set(table["gd"].keys()) == {4, 8}
        text = (tmp_path / "table_sweep.tsv").read_text().splitlines()
        assert text[0] == "method\tn_el=4\tn_el=8"
        assert [line.split("\t")[0] for line in text[1:]] == ["gd", "pgd-exact", "pgd-inexact"]
        for method in table:
            for summary in table[method].values():
                assert summary.status == "converged"

    def test_empty_values_rejected(self, tmp_path):
        cfg = ExperimentConfig(kind="logsumexp", out_dir=str(tmp_path))
        with pytest.raises(ConfigError):
            run_table1_sweep(cfg, [])

    def test_out_of_range_n_el_rejected(self, tmp_path):
        cfg = ExperimentConfig(kind="logsumexp", n=50, out_dir=str(tmp_path))
        with pytest.raises(ConfigError):
            run_table1_sweep(cfg, [50])


class TestCLI:
    def test_run_exit_zero(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(SMALL_QUADRATIC)
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0

    def test_method_override_wins(self, tmp_path, capsys):
        path = tmp_path / "cfg.ini"
        path.write_text(SMALL_QUADRATIC)
        assert main(["run", "--config", str(path), "--method", "gd",
                     "--out", str(tmp_path / "o")]) == 0
        assert "gd" in capsys.readouterr().out

    def test_config_error_exit_three(self, tmp_path, capsys):
        path = tmp_path / "cfg.ini"
        path.write_text("[problem]\nkind = cubic\n")
        assert main(["run", "--config", str(path)]) == 3
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exit_three(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 3

    def test_max_iter_exit_two(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(SMALL_QUADRATIC + "\n")
        cfg_text = SMALL_QUADRATIC.replace("max_iter = 5000", "max_iter = 2")
        path.write_text(cfg_text)
        assert main(["run", "--config", str(path), "--method", "gd",
                     "--out", str(tmp_path / "o")]) == 2

    def test_line_search_failure_exit_four(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text("""
[problem]
kind = logsumexp
n = 30
n_el = 3

[method]
name = gd

[armijo]
t0 = 1e8
max_trials = 1
curvature_scaled_init = false

[output]
dir = {out}
""".format(out=tmp_path / "o"))
        assert main(["run", "--config", str(path)]) == 4

    def test_report_condition_verb(self, tmp_path, capsys):
        path = tmp_path / "cfg.ini"
        path.write_text(SMALL_QUADRATIC)
        assert main(["report-condition", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "kappa2(A)" in out and "kappa2(S)" in out

    def test_selftest_verb(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_sweep_verb(self, tmp_path, capsys):
        path = tmp_path / "cfg.ini"
        path.write_text("[problem]\nkind = logsumexp\nn = 60\nn_el = 4\n"
                        f"[output]\ndir = {tmp_path / 'o'}\n")
        assert main(["sweep-table1", "--config", str(path), "--n-el", "4,8"]) == 0
        assert "pgd-inexact" in capsys.readouterr().out
