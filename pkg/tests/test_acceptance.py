"""Acceptance gate: one test per shipped guarantee, one printed line each.

Each criterion states its own tolerance and, where specified, a wall-clock
budget. The ablation and descent criteria share one set of benchmark
training runs (cached at module level) so the suite stays fast.
"""

import dataclasses
import json
import time

import numpy as np

import conftest
from oracles import auroc_pairs, fpr95_sweep, partition_bruteforce
from promptgeo.embedstore import Dataset
from promptgeo.encoder import SurrogateEncoder
from promptgeo.grad import run_gradcheck
from promptgeo.losses import batch_loss
from promptgeo.metrics import auroc, fpr_at_95_tpr
from promptgeo.regions import SoftmaxConfig, partition_regions
from promptgeo.scoring import score_dataset
from promptgeo.subspace import (
    PromptMatrix,
    alignment_ratios,
    gram_inverse,
    project_complement,
    project_onto,
    projection_pair,
)
from promptgeo import kernels
from promptgeo.synth import SynthConfig, generate
from promptgeo.trainer import TrainConfig, evaluate, init_prompts, train
from promptgeo.cli import main as cli_main


def _report(ok: bool, line: str) -> None:
    # collected into the terminal summary by conftest; the plain print shows
    # under -s and in failure output
    verdict = f"[{'PASS' if ok else 'FAIL'}] {line}"
    conftest.ACCEPTANCE_LINES.append(verdict)
    print(verdict, flush=True)


# ---------------------------------------------------------------- criterion 1

def test_projector_algebra():
    t0 = time.perf_counter()
    worst_idem = worst_pyth = 0.0
    complement_ok = ratios_ok = True
    for seed in range(100):
        rs = np.random.default_rng(seed)
        pm = PromptMatrix(rs.standard_normal((512, 16)), epsilon=0.0)
        f = rs.standard_normal(512)
        nf = float(np.linalg.norm(f))

        pair = projection_pair(pm, f)
        idem = float(np.linalg.norm(project_onto(pm, pair.parallel) - pair.parallel))
        worst_idem = max(worst_idem, idem / nf)

        # complementarity is exact by construction: orthogonal == f - parallel
        complement_ok &= bool(np.array_equal(pair.orthogonal, f - pair.parallel))
        complement_ok &= bool(np.array_equal(project_complement(pm, f), pair.orthogonal))

        r_par, r_orth = alignment_ratios(pm, f)
        ratios_ok &= 0.0 <= r_par <= 1.0 and 0.0 <= r_orth <= 1.0
        worst_pyth = max(worst_pyth, abs(r_par**2 + r_orth**2 - 1.0))
    dt = time.perf_counter() - t0
    ok = worst_idem <= 1e-8 and complement_ok and worst_pyth <= 1e-9 and ratios_ok and dt < 5.0
    _report(ok, f"projector algebra: idem {worst_idem:.2e}, pythagoras {worst_pyth:.2e}, "
                f"complement exact {complement_ok}, 100 matrices in {dt:.2f}s (< 5s)")
    assert worst_idem <= 1e-8
    assert complement_ok
    assert worst_pyth <= 1e-9
    assert ratios_ok
    assert dt < 5.0


# ---------------------------------------------------------------- criterion 2

def test_gradient_verification():
    t0 = time.perf_counter()
    rows = run_gradcheck(seeds=range(20), h=1e-5, tol=1e-4)
    dt = time.perf_counter() - t0
    assert len(rows) == 100  # 5 loss configurations x 20 seeds
    worst = max(row["max_rel_error"] for row in rows)
    all_ok = all(row["ok"] for row in rows)
    ok = all_ok and worst <= 1e-4 and dt < 30.0
    _report(ok, f"gradient verification: worst rel error {worst:.2e} (<= 1e-4) "
                f"over 100 runs in {dt:.2f}s (< 30s)")
    assert all_ok and worst <= 1e-4
    assert dt < 30.0


# ---------------------------------------------------------------- criterion 3

def test_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    exact = True
    for case in range(50):
        n = int(rng.integers(1, 201))
        m = int(rng.integers(1, 201))
        if case % 2 == 0:
            ids = rng.integers(0, 8, n) / 4.0  # heavy ties
            oods = rng.integers(0, 8, m) / 4.0
        else:
            ids = rng.normal(0.5, 1.0, n)
            oods = rng.normal(0.0, 1.0, m)
        if case % 10 == 5 and n == m:
            oods = rng.permutation(ids)
        got_fpr, got_eta = fpr_at_95_tpr(ids, oods)
        want_fpr, want_eta = fpr95_sweep(ids, oods)
        exact &= got_fpr == want_fpr and got_eta == want_eta
        exact &= auroc(ids, oods) == auroc_pairs(ids, oods)
    dt = time.perf_counter() - t0
    ok = exact and dt < 5.0
    _report(ok, f"metric oracles: 50 instances exact={exact} in {dt:.2f}s (< 5s)")
    assert exact
    assert dt < 5.0


# ---------------------------------------------------------------- criterion 4

def test_region_partition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    agree = True
    for _ in range(50):
        K = int(rng.integers(2, 21))
        R = int(rng.integers(1, 17))
        D = int(rng.integers(4, 12))
        C = int(rng.integers(0, K + 1))
        G = rng.standard_normal((K, D))
        G /= np.linalg.norm(G, axis=1)[:, None]
        feats = rng.standard_normal((R, D))
        y = int(rng.integers(0, K))
        part = partition_regions(feats, G, y, SoftmaxConfig(tau=0.5, C=C))
        want_J, want_Jp = partition_bruteforce(feats, G, y, 0.5, C)
        agree &= np.array_equal(part.J, want_J) and np.array_equal(part.J_prime, want_Jp)
        agree &= len(part.J) + len(part.J_prime) == R

    rs = np.random.default_rng(7)
    G = rs.standard_normal((6, 8))
    feats = rs.standard_normal((10, 8))
    all_J = partition_regions(feats, G, 0, SoftmaxConfig(tau=0.5, C=0))
    none_J = partition_regions(feats, G, 0, SoftmaxConfig(tau=0.5, C=6))
    boundary = len(all_J.J) == 10 and len(none_J.J) == 0
    dt = time.perf_counter() - t0
    ok = agree and boundary and dt < 5.0
    _report(ok, f"region partition: 50 oracle instances agree={agree}, "
                f"boundary identities {boundary}, {dt:.2f}s (< 5s)")
    assert agree
    assert boundary
    assert dt < 5.0


# ------------------------------------------------------- criteria 5 + 6 setup

BENCH_LAMBDAS = {"none": (0.0, 0.0, 0.0), "ent": (0.0, 0.0, 5.0), "full": (1.0, 4.0, 5.0)}
_BENCH: dict = {}


def _bench_data(seed: int):
    return generate(SynthConfig(
        D=64, K=5, M_star=8, n_train_per_class=16, n_id_test=200, n_ood_test=200,
        H_loc=4, W_map=4, noise_sigma=2.5, ood_leak=0.25, seed=seed,
    ))


def _bench_config(seed: int, lam) -> TrainConfig:
    return TrainConfig(M=8, lr=0.05, batch_size=32, epochs=25, seed=seed, tau=0.1,
                       C=None, lambda1=lam[0], lambda2=lam[1], lambda3=lam[2],
                       modulation="sct")


def _benchmark() -> dict:
    """Train the three regularizer configs over 5 seeds once; cache results."""
    if _BENCH:
        return _BENCH
    t0 = time.perf_counter()
    aurocs = {name: [] for name in BENCH_LAMBDAS}
    descent = []
    for name, lam in BENCH_LAMBDAS.items():
        for seed in range(5):
            res = _bench_data(seed)
            cfg = _bench_config(seed, lam)
            out = train(res.train, cfg)
            rep = evaluate(out.pm, out.enc, res.id_test, res.ood_test,
                           cfg.softmax_config()).report
            aurocs[name].append(rep.auroc)
            if name == "full":
                pm0 = init_prompts(64, 8, cfg.seed, cfg.init_std, cfg.epsilon)
                args = (res.train.classes, res.train.labels, res.train.global_feats,
                        res.train.local_feats, cfg.softmax_config(), cfg.loss_weights())
                b0 = batch_loss(pm0, out.enc, *args)
                b1 = batch_loss(out.pm, out.enc, *args)
                descent.append((b0.sub_id + b0.sub_ood, b1.sub_id + b1.sub_ood))
    _BENCH["means"] = {name: float(np.mean(v)) for name, v in aurocs.items()}
    _BENCH["descent"] = descent
    _BENCH["elapsed"] = time.perf_counter() - t0
    return _BENCH


# ---------------------------------------------------------------- criterion 5

def test_ablation_ordering():
    bench = _benchmark()
    m, dt = bench["means"], bench["elapsed"]
    gap = m["full"] - m["none"]
    ordered = m["full"] >= m["ent"] >= m["none"]
    ok = ordered and gap >= 0.05 and dt < 60.0
    _report(ok, f"ablation ordering: none={m['none']:.4f} ent={m['ent']:.4f} "
                f"full={m['full']:.4f}, full-none={gap:+.4f} (>= 0.05), "
                f"15 runs in {dt:.1f}s (< 60s)")
    assert ordered, m
    assert gap >= 0.05, m
    assert dt < 60.0


# ---------------------------------------------------------------- criterion 6

def test_subspace_descent():
    bench = _benchmark()
    drops = [before - after for before, after in bench["descent"]]
    strict = all(d > 0 for d in drops)

    # lr=0 leaves the trained state bit-identical to initialization
    res = _bench_data(0)
    cfg = dataclasses.replace(_bench_config(0, BENCH_LAMBDAS["full"]), lr=0.0)
    out = train(res.train, cfg)
    pm0 = init_prompts(64, 8, cfg.seed, cfg.init_std, cfg.epsilon)
    frozen = bool(np.array_equal(out.pm.W, pm0.W))
    args = (res.train.classes, res.train.labels, res.train.global_feats,
            res.train.local_feats, cfg.softmax_config(), cfg.loss_weights())
    at_end = batch_loss(out.pm, out.enc, *args)
    at_init = batch_loss(pm0, out.enc, *args)
    frozen &= at_end == at_init
    # epoch rows re-aggregate the same per-sample values in shuffled order,
    # so they agree only up to summation-order rounding
    rows = out.history
    for row in rows[1:]:
        frozen &= all(
            abs(row[k] - rows[0][k]) <= 1e-12 * max(1.0, abs(rows[0][k]))
            for k in ("ce", "ent", "sub_id", "sub_ood", "total")
        )

    ok = strict and frozen
    _report(ok, f"subspace descent: per-seed drop "
                f"{' '.join(f'{d:+.3f}' for d in drops)} all strict={strict}, "
                f"lr=0 bit-identical={frozen}")
    assert strict, bench["descent"]
    assert frozen


# ---------------------------------------------------------------- criterion 7

def _scaled(ds: Dataset, factor: float) -> Dataset:
    return dataclasses.replace(
        ds,
        global_feats=ds.global_feats * factor,
        local_feats=None if ds.local_feats is None else ds.local_feats * factor,
    )


def test_scale_invariance():
    res = _bench_data(0)
    pm = init_prompts(64, 8, seed=0)
    enc = SurrogateEncoder.surrogate(64, seed=0)
    cfg = _bench_config(0, BENCH_LAMBDAS["full"])
    scfg, weights = cfg.softmax_config(), cfg.loss_weights()

    worst = 0.0
    for ds in (res.train, res.id_test):
        big = _scaled(ds, 3.7)
        a = batch_loss(pm, enc, ds.classes, ds.labels, ds.global_feats,
                       ds.local_feats, scfg, weights)
        b = batch_loss(pm, enc, big.classes, big.labels, big.global_feats,
                       big.local_feats, scfg, weights)
        for field in ("ce", "ent", "sub_id", "sub_ood", "total"):
            worst = max(worst, abs(getattr(a, field) - getattr(b, field)))

        sa, pa = score_dataset(ds, pm, enc, scfg)
        sb, pb = score_dataset(big, pm, enc, scfg)
        worst = max(worst, float(np.max(np.abs(sa - sb))))
        partitions_equal = bool(np.array_equal(pa, pb))

    from promptgeo.encoder import encode_all
    G = encode_all(enc, pm, res.train.classes)
    parts_same = True
    for i in range(8):
        p1 = partition_regions(res.train.local_feats[i], G, int(res.train.labels[i]), scfg)
        p2 = partition_regions(res.train.local_feats[i] * 3.7, G,
                               int(res.train.labels[i]), scfg)
        parts_same &= np.array_equal(p1.J, p2.J) and np.array_equal(p1.J_prime, p2.J_prime)

    ids_a, _ = score_dataset(res.id_test, pm, enc, scfg)
    ids_b, _ = score_dataset(_scaled(res.id_test, 3.7), pm, enc, scfg)
    oods_a, _ = score_dataset(res.ood_test, pm, enc, scfg)
    oods_b, _ = score_dataset(_scaled(res.ood_test, 3.7), pm, enc, scfg)
    fpr_a, eta_a = fpr_at_95_tpr(ids_a, oods_a)
    fpr_b, eta_b = fpr_at_95_tpr(ids_b, oods_b)
    worst = max(worst, abs(fpr_a - fpr_b), abs(eta_a - eta_b),
                abs(auroc(ids_a, oods_a) - auroc(ids_b, oods_b)))

    ok = worst <= 1e-9 and parts_same and partitions_equal
    _report(ok, f"scale invariance: x3.7 worst drift {worst:.2e} (<= 1e-9), "
                f"partitions identical {parts_same}")
    assert worst <= 1e-9
    assert parts_same and partitions_equal


# ---------------------------------------------------------------- criterion 8

def test_pipeline_determinism(tmp_path):
    outputs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        code = cli_main(["synth", "--out", str(d), "--seed", "11", "--dim", "16",
                         "--classes", "3", "--planted-dim", "4", "--per-class", "4",
                         "--id-test-count", "10", "--ood-test-count", "10",
                         "--h-loc", "2", "--w-map", "2", "--noise-sigma", "0.1",
                         "--ood-leak", "0.25"])
        assert code == 0
        ck = str(d / "ck.sbcw")
        code = cli_main(["train", "--data", str(d / "train.sbcp"), "--checkpoint", ck,
                         "--seed", "11", "--prompts", "4", "--epochs", "2",
                         "--lr", "0.05", "--tau", "0.1", "--batch-size", "8"])
        assert code == 0
        rp = str(d / "report.json")
        code = cli_main(["eval", "--checkpoint", ck, "--id-test", str(d / "id_test.sbcp"),
                         "--ood-test", str(d / "ood_test.sbcp"), "--out", rp])
        assert code == 0
        sidecar = json.loads((d / "ck.sbcw.json").read_text())
        sidecar.pop("data")  # records the input path, which differs per run dir
        outputs.append({
            "checkpoint": (d / "ck.sbcw").read_bytes(),
            "sidecar": sidecar,
            "loss": (d / "ck.sbcw.loss.csv").read_bytes(),
            "report": (d / "report.json").read_bytes(),
            "train": (d / "train.sbcp").read_bytes(),
        })
    same = {k: outputs[0][k] == outputs[1][k] for k in outputs[0]}
    ok = all(same.values())
    _report(ok, f"pipeline determinism: repeated synth/train/eval bit-identical "
                f"({', '.join(k for k in same)})")
    assert ok, same


# ---------------------------------------------------------------- criterion 9

def _projection_workload(D: int, chunk: int = 2_000):
    # The chunk is sized so both working sets stay cache-resident; at 10k
    # rows the D=1024 batch is 80MB and the measurement turns into a DRAM
    # bandwidth test instead of a projection cost test.
    rs = np.random.default_rng(D)
    pm = PromptMatrix(rs.standard_normal((D, 16)), epsilon=0.0)
    Ginv = gram_inverse(pm)
    F = rs.standard_normal((chunk, D))
    kernels.project_rows(F, pm.W, Ginv)  # warmup (JIT + allocator)

    def run(n_rows: int = 100_000) -> float:
        t0 = time.perf_counter()
        for _ in range(n_rows // chunk):
            kernels.project_rows(F, pm.W, Ginv)
        return time.perf_counter() - t0

    return run


def test_projection_cost_scaling():
    run512 = _projection_workload(512)
    run1024 = _projection_workload(1024)
    # Interleave the two sizes so a transient system stall cannot hit only
    # one of them; best-of filters the stalls themselves.  Reps are capped
    # by wall time because a full pass costs ~3s on the loop backend.
    t512, t1024 = np.inf, np.inf
    start = time.perf_counter()
    for rep in range(5):
        t512 = min(t512, run512())
        t1024 = min(t1024, run1024())
        if rep >= 1 and time.perf_counter() - start > 6.0:
            break
    ratio = t1024 / t512
    ok = ratio <= 2.6
    _report(ok, f"projection cost: 1e5 rows D=512 {t512*1e3:.0f}ms, "
                f"D=1024 {t1024*1e3:.0f}ms, ratio {ratio:.2f} (<= 2.6)")
    assert ok, f"ratio {ratio}"
