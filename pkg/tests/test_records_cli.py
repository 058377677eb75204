import csv
import io
import json

import numpy as np
import pytest

from bergheat import cli
from bergheat.heat import haar_unitary
from bergheat.manifest import RunManifest, derive_seed, parallel_map, worker_count
from bergheat.matrix_metric import PolarBatch
from bergheat.records import read_jsonl, read_records, to_jsonable, write_csv, write_jsonl, write_records


def small_batch(n=3, N=3):
    rng = np.random.default_rng(0)
    lam = rng.standard_normal((n, N))
    lam -= lam.mean(axis=1, keepdims=True)
    lam = -np.sort(-lam, axis=1)
    return PolarBatch(lam, haar_unitary(N, 1, size=n))


def test_jsonl_round_trip():
    batch = small_batch()
    buf = io.StringIO()
    write_jsonl(buf, batch)
    back = read_jsonl(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.lam, batch.lam) and np.array_equal(back.U, batch.U)


def test_binary_round_trip_and_truncation():
    batch = small_batch()
    buf = io.BytesIO()
    write_records(buf, batch)
    back = read_records(io.BytesIO(buf.getvalue()))
    assert np.array_equal(back.lam, batch.lam) and np.array_equal(back.U, batch.U)
    with pytest.raises(EOFError):
        read_records(io.BytesIO(buf.getvalue()[:-5]))


def test_csv_and_jsonable():
    buf = io.StringIO()
    write_csv(buf, [{"a": 1, "b": 2.5}, (3, 4)], ["a", "b"])
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows == [["a", "b"], ["1", "2.5"], ["3", "4"]]
    obj = to_jsonable({"x": np.arange(2), "y": np.float64(np.inf), "z": 1 + 2j, "b": np.bool_(True)})
    assert json.loads(json.dumps(obj)) == {"x": [0, 1], "y": "inf", "z": [1.0, 2.0], "b": True}


def test_seed_derivation():
    a = np.random.default_rng(derive_seed(3, "exp", 1)).random()
    b = np.random.default_rng(derive_seed(3, "exp", 1)).random()
    c = np.random.default_rng(derive_seed(3, "exp", 2)).random()
    d = np.random.default_rng(derive_seed(3, "other", 1)).random()
    assert a == b and len({a, c, d}) == 3


def test_worker_pool(monkeypatch):
    monkeypatch.setenv("BERGHEAT_WORKERS", "2")
    assert worker_count() == 2
    assert parallel_map(abs, [-3, 1, -2]) == [3, 1, 2]
    monkeypatch.setenv("BERGHEAT_WORKERS", "x")
    with pytest.raises(ValueError):
        worker_count()


def test_manifest_fields():
    m = RunManifest(["bergheat"], {"k": 1}, 7).finish().to_dict()
    for key in ("command", "parameters", "seed", "versions", "host", "wall_time"):
        assert key in m
    assert m["versions"]["numpy"] == np.__version__


def run_cli(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_cli_list(capsys):
    code, out = run_cli(["list"], capsys)
    assert code == 0
    assert len(out.out.strip().splitlines()) == 12


def test_cli_oracle(capsys):
    code, out = run_cli(["oracle", "d-rho", "--t", "1", "--rho", "0.3"], capsys)
    assert code == 0
    assert json.loads(out.out)["value"] == pytest.approx(0.844667087660412, rel=1e-10)
    code, out = run_cli(["oracle", "hciz", "--a", "1,2", "--b", "3"], capsys)
    assert code == 2
    code, out = run_cli(["oracle", "d-rho", "--t", "1", "--rho", "1.5"], capsys)
    assert code == 2


def test_cli_sample_round_trip(tmp_path, capsys):
    out = tmp_path / "s.bin"
    code, _ = run_cli(["sample", "--N", "3", "--t", "1", "--n", "20", "--burn-in", "200",
                       "--format", "binary", "--out", str(out)], capsys)
    assert code == 0
    with open(out, "rb") as fh:
        batch = read_records(fh)
    assert len(batch) == 20
    manifest = json.loads((tmp_path / "s.bin.manifest.json").read_text())
    assert manifest["seed"] == 0 and "sampler" in manifest["seed_tree"]
    out2 = tmp_path / "s.jsonl"
    run_cli(["sample", "--N", "3", "--t", "1", "--n", "20", "--burn-in", "200", "--out", str(out2)], capsys)
    with open(out2) as fh:
        again = read_jsonl(fh)
    assert np.allclose(again.lam, batch.lam)


def test_cli_zeros_sample(tmp_path, capsys):
    out = tmp_path / "z.csv"
    assert cli.main(["zeros", "sample", "--k", "5", "--n", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 10 and set(rows[0]) == {"sample", "re", "im", "at_infinity"}


def test_cli_number_variance_bad_set(capsys):
    code, out = run_cli(["zeros", "number-variance", "--k", "4", "--set", "cube"], capsys)
    assert code == 2 and "configuration error" in out.err


def test_cli_estimate_two_point(tmp_path, capsys):
    pairs = tmp_path / "pairs.json"
    pairs.write_text(json.dumps([0.3, 0.6]))
    code, out = run_cli(["estimate", "two-point", "--k", "3", "--t", "1", "--pairs", str(pairs),
                         "--n", "500", "--rotations", "4", "--csv", str(tmp_path / "c.csv"),
                         "--json", str(tmp_path / "d.json")], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert [float(r["rho"]) for r in rows] == [0.6, 0.3]
    diffs = json.loads((tmp_path / "d.json").read_text())["differences"]
    assert diffs[0]["pairs"] == [0, 1]


def test_cli_boundary(tmp_path, capsys):
    code, out = run_cli(["boundary", "ray", "--k", "2", "--times", "1,4,16",
                         "--roots", str(tmp_path / "r.csv")], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert data["nonincreasing"] and len(data["l1"]) == 3


@pytest.mark.parametrize("text", ["", "   ", "{", "[]", '{"seed": 1}', '{"experiment": "hciz", "bogus": 1}',
                                  '{"experiment": "hciz", "params": []}'])
def test_cli_run_config_errors(tmp_path, capsys, text):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    code, out = run_cli(["run", str(cfg)], capsys)
    assert code == 2 and "configuration error" in out.err


def test_cli_run_unknown_experiment_and_param(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"experiment": "nope"}')
    assert run_cli(["run", str(cfg)], capsys)[0] == 2
    cfg.write_text('{"experiment": "oracle-identities", "params": {"zzz": 1}}')
    assert run_cli(["run", str(cfg)], capsys)[0] == 2
    assert run_cli(["run", str(tmp_path / "missing.json")], capsys)[0] == 2


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "oracle-identities", "seed": 3, "params": {"grid": 20}}))
    code, out = run_cli(["run", str(cfg), "--out", str(tmp_path / "res"), "--set", "times=[1.0]"], capsys)
    assert code == 0
    assert all(line.startswith("[PASS]") for line in out.out.strip().splitlines())
    summary = json.loads((tmp_path / "res" / "oracle-identities-summary.json").read_text())
    assert summary["passed"] and summary["parameters"]["times"] == [1.0]
    manifest = json.loads((tmp_path / "res" / "oracle-identities-manifest.json").read_text())
    assert manifest["seed"] == 3
    assert (tmp_path / "res" / "oracle-identities-small_rho.csv").exists()


def test_cli_run_failing_criterion_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "oracle-limits",
                               "params": {"scan_times": [1.0], "rhos": [0.5]}}))
    code, out = run_cli(["run", str(cfg)], capsys)
    assert code == 1 and "[FAIL]" in out.out
