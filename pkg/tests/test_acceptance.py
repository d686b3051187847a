"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line and the run ends with a summary of
all of them. Runtime budgets are asserted alongside the numeric tolerances.
"""

import math

import numpy as np
import pytest

from qens import harness
from qens.cli import main
from qens.config import parse_config
from qens.cosine import (
    CosineConfig,
    build_qcc_circuit,
    build_qec_circuit,
    cosine_predict,
    predict_labels,
    qcc_oracle,
    qec_oracle,
    readout,
)
from qens.data import BlobConfig, make_blobs, preprocess_split, stratified_splits
from qens.ensemble import EnsembleModel, GridPoint, GridSpec, grid_search
from qens.metrics import accuracy, brier, weighted_f1, welch_t_test
from qens.seeding import derive_seed
from qens.simulator import Circuit, QuantumState, run_circuit
from qens.variational import (
    LearnerParams,
    encode_batch,
    forward,
    init_params,
    num_qubits_for,
    predict_proba,
    probs_and_jacobian,
)

import oracles
from helpers import gate_spec, random_gate

SEPARATED = BlobConfig(0.3, 0.3, 1.0)
OVERLAPPING = BlobConfig(0.3, 0.5, 0.5)


def blob_splits(config, seed=0):
    data = make_blobs(BlobConfig(config.cluster_std, config.p1, config.p2, seed=seed))
    return data, stratified_splits(data.labels, 10, 0.2, seed=seed)


def test_01_simulator_matches_dense_oracle(criterion):
    rng = np.random.default_rng(101)
    with criterion(1, "simulator vs dense matrix oracle, 200 circuits", 10):
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 4))
            gates = [random_gate(rng, n) for _ in range(int(rng.integers(1, 16)))]
            v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
            v /= np.linalg.norm(v)
            out = run_circuit(Circuit(n).extend(gates), QuantumState(n, v)).amplitudes
            ref = oracles.circuit_operator(n, [gate_spec(g) for g in gates]) @ v
            worst = max(worst, float(np.max(np.abs(out - ref))))
        assert worst < 1e-10, f"max amplitude error {worst:.2e}"


def test_02_swap_test_law(criterion):
    rng = np.random.default_rng(202)
    with criterion(2, "swap-test readout law, 500 pairs", 30):
        worst = 0.0
        for i in range(500):
            nf = (2, 4, 8)[i % 3]
            a, b = rng.uniform(0, 1, nf), rng.uniform(0, 1, nf)
            y = int(rng.integers(2))
            p = readout(build_qcc_circuit(a, y, b, nf))
            worst = max(worst, abs(p - qcc_oracle(a, y, b, nf)), abs(p - oracles.cosine_probability(a, y, b, nf)))
        assert worst < 1e-9, f"max deviation {worst:.2e}"


def test_03_qec_branch_average_full_grid(criterion):
    rng = np.random.default_rng(303)
    grid = [CosineConfig(d, nt, ns, nf, seed=d * 100 + nt * 10 + ns + nf)
            for d in (1, 2, 3) for nt in (2, 4) for ns in (1, 2, 4) for nf in (2, 4, 8)]
    with criterion(3, "QEC readout equals branch mean on the 54-config grid", 300):
        assert len(grid) == 54 and max(c.num_qubits for c in grid) <= 23
        worst = 0.0
        for cfg in grid:
            X = rng.uniform(0.05, 1.0, (cfg.n_train, cfg.n_feature))
            y = rng.integers(0, 2, cfg.n_train)
            t = rng.uniform(0.05, 1.0, cfg.n_feature)
            circ, _ = build_qec_circuit(cfg, X, y, t)
            worst = max(worst, abs(readout(circ) - qec_oracle(cfg, X, y, t)))
        assert worst < 1e-9, f"max deviation {worst:.2e}"


def test_04_qubit_accounting(criterion):
    with criterion(4, "qubit and parameter accounting", 10):
        assert CosineConfig(1, 2, 1, 2).num_qubits == 7
        assert CosineConfig(1, 4, 1, 4).num_qubits == 16
        n = num_qubits_for(8)
        assert n == 3 and init_params(n, 0).num_params == 18
        soft = EnsembleModel("soft_vote", [init_params(num_qubits_for(4), s) for s in range(5)], np.ones(5))
        assert soft.num_qubits == 10
        boost = EnsembleModel("adaboost", [init_params(num_qubits_for(2), s) for s in range(6)], np.ones(6))
        circ = boost.joint_circuit([0.3, 0.7])
        assert boost.num_qubits == 6 and circ.num_qubits == 6
        assert circ.two_qubit_depth() == 0


def test_05_parameter_shift_vs_finite_differences(criterion):
    rng = np.random.default_rng(505)
    h = 1e-4
    with criterion(5, "parameter-shift gradient vs central differences, 100 draws", 60):
        worst = 0.0
        for i in range(100):
            n = (1, 2, 3)[i % 3]
            x = rng.uniform(0, 1, 1 << n)
            theta = rng.uniform(-math.pi, math.pi, 6 * n)
            states = encode_batch([x], n)
            _, jac = probs_and_jacobian(states, theta, n)
            shifted = np.concatenate([theta + h * np.eye(6 * n), theta - h * np.eye(6 * n)])
            vals = forward(states, shifted, n)[:, 0]
            fd = (vals[: 6 * n] - vals[6 * n:]) / (2 * h)
            worst = max(worst, float(np.max(np.abs(jac[0, 0] - fd))))
        assert worst < 1e-6, f"max component error {worst:.2e}"


def _subgrid_scores(kind, config, points):
    """Median over splits of each point's median 4-fold validation accuracy."""
    data, splits = blob_splits(config)
    per_point = {p: [] for p in points}
    for split in splits:
        X, _ = preprocess_split(data.features[split.train], data.features[split.test])
        y = data.labels[split.train]
        for res in grid_search(kind, X, y, GridSpec(), seed=derive_seed(0, split.split_id), points=points):
            per_point[res.point].append(res.median_accuracy)
    return {p: float(np.median(v)) for p, v in per_point.items()}


@pytest.mark.slow
def test_06_blob_learnability(criterion):
    points = [GridPoint(lr, b, n) for lr in (1e-2, 1e-1) for b, n in ((2, 3), (4, 6), (8, 3))]
    with criterion(6, "variational ensembles learn separated blobs, AdaBoost stays near chance", 1800):
        bag = _subgrid_scores("bagging", SEPARATED, points)
        soft = _subgrid_scores("soft_vote", SEPARATED, points)
        boost = _subgrid_scores("adaboost", OVERLAPPING, points)
        detail = (f"bagging best {max(bag.values()):.3f}, soft vote best {max(soft.values()):.3f}, "
                  f"adaboost overlapping max {max(boost.values()):.3f}")
        print(detail)
        for lr in (1e-2, 1e-1):
            assert max(v for p, v in bag.items() if p.learning_rate == lr) >= 0.70, detail
            assert max(v for p, v in soft.items() if p.learning_rate == lr) >= 0.70, detail
        assert max(bag.values()) >= 0.95, detail
        assert max(boost.values()) <= 0.55, detail


def test_07_qcc_weak_qec_better(criterion):
    data, splits = blob_splits(SEPARATED)
    with criterion(7, "QEC beats QCC and QCC sits near chance", 120):
        qcc, qec = [], []
        for split in splits:
            tr, te = preprocess_split(data.features[split.train], data.features[split.test])
            ytr, yte = data.labels[split.train], data.labels[split.test]
            cfg = CosineConfig(1, 2, 1, 2, seed=derive_seed(0, split.split_id))
            qcc.append(accuracy(predict_labels(cosine_predict("qcc", cfg, tr, ytr, te)), yte))
            qec.append(accuracy(predict_labels(cosine_predict("qec", cfg, tr, ytr, te)), yte))
        detail = f"QCC mean {np.mean(qcc):.3f}, QEC mean {np.mean(qec):.3f}"
        print(detail)
        assert np.mean(qec) > np.mean(qcc), detail
        assert 0.45 <= np.mean(qcc) <= 0.75, detail


def test_08_shot_estimates_within_four_sigma(criterion):
    rng = np.random.default_rng(808)
    shots = 8192
    with criterion(8, "8192-shot estimates within 4 sigma of exact, 100 cases", 60):
        failures = []
        for i in range(100):
            family = i % 4
            seed = int(rng.integers(2**32))
            if family == 0:
                n = int(rng.integers(1, 4))
                params = LearnerParams(n, rng.uniform(-math.pi, math.pi, 6 * n))
                x = rng.uniform(0, 1, 1 << n)
                exact = predict_proba(x, params)
                est = predict_proba(x, params, mode="shots", shots=shots, rng=seed)
            elif family == 1:
                learners = [init_params(1, int(rng.integers(1000))) for _ in range(int(rng.integers(1, 5)))]
                model = EnsembleModel("bagging", learners, rng.uniform(0.1, 1, len(learners)))
                x = rng.uniform(0, 1, (1, 2))
                exact = model.predict_proba(x)[0]
                est = model.predict_proba(x, "shots", shots, seed)[0]
            else:
                kind = ("qcc", "qec")[family - 2]
                cfg = CosineConfig(1, 2, 1, 2, seed=seed)
                X, y = rng.uniform(0, 1, (6, 2)), rng.integers(0, 2, 6)
                t = rng.uniform(0, 1, (1, 2))
                exact = cosine_predict(kind, cfg, X, y, t)[0]
                est = cosine_predict(kind, cfg, X, y, t, mode="shots", shots=shots)[0]
            bound = 4 * math.sqrt(exact * (1 - exact) / shots)
            if abs(est - exact) > bound + 1e-12:
                failures.append((i, exact, est, bound))
        assert not failures, f"{len(failures)} cases outside the bound, first {failures[0]}"


def test_09_forest_sanity_and_no_leakage(criterion, tmp_path, monkeypatch):
    text = """\
seed: 0
dataset:
  blobs:
    cluster_std: [0.3]
    centers: [[0.3, 1.0]]
models:
  - kind: forest
    n_iter: 5
"""
    cfg = parse_config(text)
    entry = harness.load_datasets(cfg)[0]
    seen = []
    real_search = harness.randomized_search

    def instrumented(X, y, *args, **kwargs):
        seen.append((np.array(X, copy=True), np.array(y, copy=True)))
        return real_search(X, y, *args, **kwargs)

    monkeypatch.setattr(harness, "randomized_search", instrumented)
    with criterion(9, "forest test accuracy on separated blobs, search sees training rows only", 300):
        manifest = harness.run_search(cfg, tmp_path)
        assert len(seen) == 10
        for (X, y), split in zip(seen, entry.splits):
            Xtr, Xte = harness.split_arrays(cfg, entry, split)
            assert X.shape[0] == split.train.size
            assert np.array_equal(X, Xtr) and np.array_equal(y, entry.data.labels[split.train])
            assert not {r.tobytes() for r in X} & {r.tobytes() for r in Xte}
        for e in manifest["entries"]:
            assert not set(e["train_indices"]) & set(entry.splits[e["split_id"]].test.tolist())
        rows = harness.train_eval(cfg, tmp_path)
        acc = [r["accuracy"] for r in rows if r["model"] == "forest"]
        detail = f"forest mean test accuracy {np.mean(acc):.3f} over {len(acc)} splits"
        print(detail)
        assert len(acc) == 10 and {r["config_id"] for r in rows} == {"searched"}
        assert np.mean(acc) >= 0.9, detail


def test_10_metric_fixtures(criterion):
    with criterion(10, "metric fixtures against hand and quadrature oracles", 1):
        true = [1, 1, 1, 0, 0, 0, 1, 1]
        pred = [1, 1, 1, 0, 0, 1, 0, 0]  # TP=3, TN=2, FP=1, FN=2
        assert abs(accuracy(pred, true) - 0.625) < 1e-6
        assert abs(weighted_f1([0, 0, 0, 0], [0, 0, 1, 1]) - 1 / 3) < 1e-6
        assert abs(brier([0.8, 0.3], [1, 0]) - 0.065) < 1e-6
        a, b = (0.8, 0.7, 0.9), (0.5, 0.6, 0.4)
        t_ref, df_ref = oracles.welch_reference(a, b)
        t, p = welch_t_test(a, b)
        assert abs(t - t_ref) < 1e-6
        assert abs(p - oracles.t_two_sided_p(t_ref, df_ref)) < 1e-6


def test_11_train_eval_deterministic(criterion, tmp_path):
    text = """\
name: determinism
seed: 11
output: run
dataset:
  blobs:
    cluster_std: [0.3]
    centers: [[0.3, 1.0]]
models:
  - kind: qec
    engine: statevector
  - kind: soft_vote
    learning_rate: [0.1]
    batch_size: [8]
    num_learners: [2]
    epochs: 5
  - kind: adaboost
    learning_rate: [0.1]
    batch_size: [8]
    num_learners: [2]
    epochs: 5
  - kind: forest
    configs:
      - {n_estimators: 50, max_depth: 5}
"""
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    with criterion(11, "train-eval reruns give identical results", 300):
        assert main(["train-eval", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
        assert main(["train-eval", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "results.csv").read_text().splitlines()
        b = (tmp_path / "b" / "results.csv").read_text().splitlines()
        assert a[0].startswith("# generated") and b[0].startswith("# generated")
        assert len(a) == 2 + 4 * 10
        assert a[1:] == b[1:]
