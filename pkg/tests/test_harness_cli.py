import io
import json

import numpy as np
import pytest

from asymde.cli import main
from asymde.core import BitString
from asymde.harness import (
    ConfigError,
    ExperimentConfig,
    TrialRecord,
    read_jsonl,
    report,
    run,
    trial_seeds,
    verify_expanders,
    write_jsonl,
)
from asymde.hamming_de import Stage

STAGES = {s.value for s in Stage}


def cfg(**kw):
    base = {"protocol": "general", "n": 2048, "sizes": [[128, 512]], "bounds": [[8, 2]], "trials": 4, "record_time": False}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def lines(c):
    buf = io.StringIO()
    write_jsonl(run(c), buf)
    return buf.getvalue()


# -- config -----------------------------------------------------------------------------


def test_config_rejects_unknown_and_bad_types():
    with pytest.raises(ConfigError, match="unknown"):
        cfg(colour="blue")
    with pytest.raises(ConfigError):
        cfg(trials="ten")
    with pytest.raises(ConfigError):
        cfg(layouts=["diagonal"])
    with pytest.raises(ConfigError):
        cfg(protocol="edit")  # k missing
    with pytest.raises(ConfigError):
        cfg(trials=True)


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"protocol": "one-set", "n": 1024, "sizes": [[256]], "bounds": [[4]], "trials": 2}))
    c = ExperimentConfig.load(str(path), {"trials": 3})
    assert c.trials == 3 and c.protocol == "one-set"


def test_threads_env(monkeypatch):
    monkeypatch.setenv("ASYMDE_THREADS", "3")
    assert cfg().worker_count() == 3
    assert cfg(threads=2).worker_count() == 2


# -- runs -------------------------------------------------------------------------------


def test_smallest_case_no_flips_succeeds():
    recs = list(run(cfg(sizes=[[2]], bounds=[[1]], n=64, errors="none", protocol="one-set")))
    assert all(r.success for r in recs)
    assert all(0 < r.overhead < float("inf") for r in recs)


def test_deterministic_across_runs_and_threads():
    a = lines(cfg())
    assert a == lines(cfg())
    assert a == lines(cfg(threads=3))


def test_record_fields_and_order():
    recs = list(run(cfg(layouts=["random", "contiguous"], trials=3)))
    assert [(r.cell, r.trial) for r in recs] == [(c, t) for c in range(2) for t in range(3)]
    for r in recs:
        assert r.overhead == pytest.approx(r.sketch_bits / r.baseline_bits)
        assert r.failure_stage is None if r.success else r.failure_stage in STAGES


def test_adversary_seed_never_changes_sketch():
    from asymde.hamming_de import alice_general

    shared, adv = trial_seeds(0, 0, 0)
    x = BitString.random(512, np.random.default_rng(0))
    base = alice_general(x, [64, 128], [4, 2], shared).to_bytes()
    for other in range(5):
        _, adv2 = trial_seeds(0, 0, other)
        assert adv2 != adv or other == 0
        assert alice_general(x, [64, 128], [4, 2], shared).to_bytes() == base


@pytest.mark.parametrize("protocol", ["one-set", "chi", "special", "two-sided"])
def test_hamming_protocols_run(protocol):
    sizes = [[512]] if protocol == "one-set" else [[128, 512]]
    bounds = [[8]] if protocol == "one-set" else [[8, 2]]
    extra = {"k_a": 2} if protocol == "two-sided" else {}
    recs = list(run(cfg(protocol=protocol, sizes=sizes, bounds=bounds, trials=2, **extra)))
    assert len(recs) == 2 and all(r.protocol == protocol for r in recs)


def test_edit_run_identity_and_replay():
    c = ExperimentConfig.from_dict({"protocol": "edit", "n": 4096, "k": 16, "trials": 2, "styles": ["clustered"], "record_time": False})
    recs = list(run(c))
    assert all(r.success for r in recs)
    assert lines(c) == lines(c)


def test_ecc_run_tail_pattern():
    c = ExperimentConfig.from_dict({
        "protocol": "ecc", "n": 8192, "sizes": [[512, 2048]], "bounds": [[8, 2]], "trials": 2,
        "ecc_pattern": "tail", "record_time": False,
    })
    recs = list(run(c))
    assert all(r.success for r in recs)
    assert recs[0].extra["pattern"] == "tail"


def test_verify_expanders_conservative_never_fails():
    c = ExperimentConfig.from_dict({
        "protocol": "expander", "n": 24, "sizes": [[8], [12]], "k": [1, 2], "trials": 5, "mode": "conservative",
    })
    rows = verify_expanders(c)
    assert len(rows) == 4 and all(r["failures"] == 0 for r in rows)
    assert verify_expanders(c) == rows


# -- report -----------------------------------------------------------------------------


def record(success, overhead, wall, cell=0):
    return TrialRecord("general", cell, 0, 1, 2, 100, [10], [1], None, "random", success, 10, 20, 10 / overhead, overhead, wall)


def test_report_empty_header_only():
    csv_text, _ = report([])
    assert csv_text.strip().split("\n") == [csv_text.strip()]


def test_report_single_and_hand_check():
    csv_text, _ = report([record(False, 2.0, 100)])
    assert csv_text.splitlines()[1].split(",")[6] == "0.0000"
    recs = [record(s, o, w) for s, o, w in [(True, 1, 10), (True, 2, 20), (False, 3, 30), (True, 4, 40), (True, 5, 50)]]
    row = report(recs)[0].splitlines()[1].split(",")
    assert row[5:] == ["5", "0.8000", "3.0000", "5.0000", "30", "48"]


def test_jsonl_round_trip():
    buf = io.StringIO()
    recs = list(run(cfg(trials=2)))
    write_jsonl(recs, buf)
    buf.seek(0)
    assert read_jsonl(buf) == recs


# -- CLI --------------------------------------------------------------------------------


def test_cli_run_and_report(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    assert main(["hamming", "run", "--protocol", "general", "--set", "n=2048", "--set", "sizes=[[128,512]]",
                 "--set", "bounds=[[8,2]]", "--trials", "3", "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
    csv_path = tmp_path / "r.csv"
    assert main(["report", str(out), "--csv", str(csv_path)]) == 0
    assert csv_path.read_text().startswith("protocol,cell")


def test_cli_unknown_key_exit_code(capsys):
    assert main(["hamming", "run", "--set", "bogus=1"]) == 1


def test_cli_sketch_recover_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    n = 1024
    x = BitString.random(n, rng)
    S = np.sort(rng.choice(n, size=256, replace=False))
    y = x.bits.copy()
    y[S[:4]] ^= 1
    (tmp_path / "x.bin").write_bytes(x.to_bytes())
    (tmp_path / "y.bin").write_bytes(BitString(y).to_bytes())
    (tmp_path / "s.json").write_text(json.dumps({"sizes": [256], "bounds": [4], "subsets": [S.tolist()]}))
    assert main(["hamming", "sketch", "--protocol", "one-set", "--input", str(tmp_path / "x.bin"), "--n", str(n),
                 "--sizes", "256", "--bounds", "4", "--seed", "5", "--output", str(tmp_path / "sk.bin")]) == 0
    assert main(["hamming", "recover", "--protocol", "one-set", "--input", str(tmp_path / "y.bin"),
                 "--sketch", str(tmp_path / "sk.bin"), "--subsets", str(tmp_path / "s.json"), "--seed", "5",
                 "--output", str(tmp_path / "out.bin")]) == 0
    assert BitString.from_bytes((tmp_path / "out.bin").read_bytes(), n) == x


def test_cli_edit_sketch_recover(tmp_path):
    from asymde.edit_de import edit_adversary

    rng = np.random.default_rng(2)
    n, k = 4096, 16
    x = BitString.random(n, rng)
    y = edit_adversary(x, 4, "clustered", rng)
    (tmp_path / "x.bin").write_bytes(x.to_bytes())
    (tmp_path / "y.bin").write_bytes(y.to_bytes())
    assert main(["edit", "sketch", "--input", str(tmp_path / "x.bin"), "--n", str(n), "--k", str(k), "--seed", "3",
                 "--output", str(tmp_path / "sk.bin")]) == 0
    assert main(["edit", "recover", "--input", str(tmp_path / "y.bin"), "--y-len", str(len(y)), "--k", str(k),
                 "--seed", "3", "--sketch", str(tmp_path / "sk.bin"), "--output", str(tmp_path / "out.bin")]) == 0
    assert BitString.from_bytes((tmp_path / "out.bin").read_bytes(), n) == x
