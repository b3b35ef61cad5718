"""Acceptance criteria, each checked at its stated tolerance. Every test adds
one PASS/FAIL line to the summary printed at the end of the run."""

import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

import conftest
from conftest import WORKED
from mdm_spam.baselines import core_numbers, kgram_features, pagerank, triangle_counts, weak_components
from mdm_spam.classify import f_measure
from mdm_spam.embed import encode_positions, make_batch
from mdm_spam.experiment import DESK_SCALE, mean_f, pretrain, run_protocol
from mdm_spam.ingest import NORMAL, SPAMMER, UserSequence, build_sequences
from mdm_spam.mdm import (MdmConfig, attention_forward, extract_features, forward, fuse,
                          init_params, lstm_forward, recent_window, score)
from mdm_spam.numerics import AdamState, adam_step, finite_diff_check, softmax
from mdm_spam.synth import SynthConfig, synth_events, synth_generate
from mdm_spam.train import active_keys, objective
from test_baselines import bfs_components, brute_cores, brute_triangles, dense_pagerank, random_graph


def record(number: int, name: str, ok: bool, detail: str) -> None:
    conftest.ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")
    assert ok, detail


# ------------------------------------------------------------ 1. gradients

def test_1_gradient_check_full_objective():
    t0 = time.perf_counter()
    seqs = [UserSequence(0, WORKED, SPAMMER), UserSequence(1, (1, 2, 4), NORMAL),
            UserSequence(2, (3, 4, 4, 1, 2, 3), NORMAL)]
    p = init_params(MdmConfig(d=4, n=2, k=2, L=2), seed=0, scale=0.5)
    batch = make_batch(seqs, 7)
    keys = active_keys(p)
    spam, normal, lam = [0, 0], [1, 2], 1e-2
    _, _, _, grads = objective(p, batch, spam, normal, lam, keys)
    grads["emb_in"][0] = 0.0    # padding row never reaches the loss

    def loss(t):
        return objective(p.with_tensors({**p.tensors, **t}), batch, spam, normal, lam,
                         keys, grad=False)[0]

    err = finite_diff_check(loss, {k: p.tensors[k] for k in keys}, grads)
    # plain relative error on every coordinate whose gradient is not negligible
    h, strict = 1e-5, 0.0
    for k in keys:
        arr = p.tensors[k]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss({})
            arr[idx] = orig - h
            down = loss({})
            arr[idx] = orig
            num, ana = (up - down) / (2 * h), grads[k][idx]
            if abs(num) + abs(ana) > 1e-7:
                strict = max(strict, abs(num - ana) / (abs(num) + abs(ana)))
    elapsed = time.perf_counter() - t0
    record(1, "gradient check", err < 1e-4 and strict < 1e-4 and elapsed < 30,
           f"max error {err:.2e}, plain relative {strict:.2e}, {elapsed:.1f}s "
           f"({sum(p.tensors[k].size for k in keys)} coordinates)")


# ----------------------------------------------------------- 2. F formula

def test_2_f_measure_reproduction():
    rows = [(0.6909, 0.8243, 0.7516), (0.5576, 0.6937, 0.6182), (0.5217, 0.8620, 0.6500)]
    got = [f_measure(p, r) for p, r, _ in rows]
    ok = all(abs(g - f) <= 0.001 for g, (_, _, f) in zip(got, rows))
    record(2, "F formula", ok, ", ".join(f"{g:.4f} vs {f}" for g, (_, _, f) in zip(got, rows)))


# ------------------------------------------------- 3 and 4. desk-scale runs

@pytest.fixture(scope="module")
def desk():
    events, labels = synth_events(SynthConfig(n_users=1000, spam_fraction=0.0445, seed=0))
    corpus = build_sequences(events, labels)
    t0 = time.perf_counter()
    embed = pretrain(corpus, DESK_SCALE)
    results = run_protocol(corpus, DESK_SCALE, ("mdm", "kgram"), embed=embed)
    elapsed = time.perf_counter() - t0
    for comp in ("repr", "long", "individual"):
        cfg = replace(DESK_SCALE, mdm=replace(DESK_SCALE.mdm, components=comp))
        results[comp] = run_protocol(corpus, cfg, ("mdm",), embed=embed)["mdm"]
    results["full"] = results["mdm"]
    return results, elapsed


@pytest.mark.slow
def test_3_desk_scale_detection(desk):
    results, elapsed = desk
    f_mdm, f_kgram = mean_f(results["mdm"]), mean_f(results["kgram"])
    record(3, "desk-scale detection",
           len(results["mdm"]) == 10 and f_mdm >= 0.90 and f_mdm > f_kgram and elapsed < 600,
           f"mean F {f_mdm:.4f} (bigram {f_kgram:.4f}) over {len(results['mdm'])} seeds, "
           f"{elapsed:.0f}s")


@pytest.mark.slow
def test_4_ablation_ordering(desk):
    results, _ = desk
    f = {c: mean_f(results[c]) for c in ("repr", "long", "individual", "full")}
    ok = f["repr"] <= f["long"] <= f["individual"] <= f["full"] and f["full"] - f["repr"] >= 0.02
    record(4, "ablation ordering", ok, " <= ".join(f"{c} {v:.4f}" for c, v in f.items()))


# ------------------------------------------------------ 5. graph oracles

def test_5_graph_oracles():
    t0 = time.perf_counter()
    worst_pr, mismatches = 0.0, 0
    for seed in range(50):
        g = random_graph(np.random.default_rng(seed))
        adj = g.undirected()
        mismatches += triangle_counts(adj) != brute_triangles(adj)
        mismatches += core_numbers(adj) != brute_cores(adj)
        comp = bfs_components(g)
        cid, size = weak_components(g)
        mismatches += any(size[v] != len(comp[v]) or (cid[v] == cid[w]) != (comp[v] == comp[w])
                          for v in g.nodes for w in g.nodes)
        ref, pr = dense_pagerank(g), pagerank(g)
        worst_pr = max(worst_pr, max(abs(pr[v] - ref[v]) for v in g.nodes))
    elapsed = time.perf_counter() - t0
    record(5, "graph oracles", mismatches == 0 and worst_pr < 1e-6 and elapsed < 60,
           f"50 graphs, {mismatches} mismatches, PageRank max diff {worst_pr:.1e}, {elapsed:.1f}s")


# --------------------------------------------------- 6. invariant suite

COUNTS: dict[str, int] = {}
finite = st.floats(-50, 50, allow_nan=False)


def _tick(name):
    COUNTS[name] = COUNTS.get(name, 0) + 1


@settings(max_examples=100, database=None)
@given(hnp.arrays(float, st.integers(1, 10), elements=finite), finite)
def softmax_property(x, c):
    _tick("softmax simplex and shift invariance")
    p = softmax(x)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(softmax(x + c), p, atol=1e-12)


@settings(max_examples=100, database=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 6), st.just(3)),
                  elements=st.floats(-3, 3)),
       st.integers(0, 2**32 - 1))
def attention_property(X, seed):
    _tick("attention weights sum to 1")
    rng = np.random.default_rng(seed)
    mask = rng.random(X.shape[:2]) < 0.7
    mask[:, 0] = True
    w2, c1, w1, c2 = rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3), rng.normal(size=1)
    _, alpha, _ = attention_forward(X, mask, w2, c1, w1, c2)
    np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(alpha[~mask] == 0)


@settings(max_examples=100, database=None)
@given(st.lists(st.integers(1, 7), min_size=1, max_size=50))
def kgram_property(seq):
    _tick("bigram count conservation")
    assert kgram_features(tuple(seq)).sum() == len(seq) - 1


@settings(max_examples=100, database=None)
@given(hnp.arrays(float, 6, elements=finite), hnp.arrays(float, 6, elements=finite),
       hnp.arrays(float, 6, elements=finite))
def fuse_property(v, g, h):
    _tick("fuse additivity")
    np.testing.assert_allclose(fuse(v, g + h), fuse(v, g) + h, atol=1e-9)
    np.testing.assert_array_equal(fuse(v, g), fuse(g, v))


@settings(max_examples=100, database=None)
@given(hnp.arrays(float, st.integers(1, 8), elements=finite), st.integers(1, 4))
def adam_property(p, steps):
    _tick("Adam zero-gradient identity")
    state, q = AdamState(p.shape), p.copy()
    for _ in range(steps):
        q = adam_step(q, np.zeros_like(q), state)
    np.testing.assert_array_equal(q, p)


@settings(max_examples=100, database=None)
@given(st.integers(0, 2**32 - 1))
def determinism_property(seed):
    _tick("determinism under seed")
    cfg = SynthConfig(n_users=15, spam_fraction=0.2, mean_length=8, seed=seed)
    a, b = synth_generate(cfg), synth_generate(cfg)
    assert a.sequences == b.sequences
    mc = MdmConfig(d=3, n=2, k=1, L=1)
    pa, pb = init_params(mc, seed), init_params(mc, seed)
    seq = a.sequences[0].items
    assert score(seq, pa) == score(seq, pb)


def test_6_invariant_suite():
    props = [softmax_property, attention_property, kgram_property, fuse_property,
             adam_property, determinism_property]
    COUNTS.clear()
    failures = []
    for prop in props:
        try:
            prop()
        except Exception as exc:        # report every failing invariant, not just the first
            failures.append(f"{prop.__name__}: {exc}")
    few = {k: v for k, v in COUNTS.items() if v < 100}
    record(6, "invariant suite", not failures and not few and len(COUNTS) == len(props),
           "; ".join(f"{k} x{v}" for k, v in COUNTS.items()) + (f"; FAILED {failures}" if failures else ""))


# ------------------------------------------------------- 7. shape audit

def test_7_worked_example_shapes():
    cfg = MdmConfig(d=32, n=3)
    p = init_params(cfg, seed=0)
    e = encode_positions(WORKED, p.tensors)
    z = lstm_forward(e, p)
    H, valid = recent_window(z, cfg.n)
    fw = forward(p, make_batch([WORKED], 7))
    feats = extract_features(WORKED, p, "concat-all")
    shapes = (e.shape, H.shape, fw.v[0].shape, fw.g[0].shape, feats.shape)
    ok = (shapes == ((9, 32), (3, 32), (32,), (32,), (288,))
          and np.array_equal(H, z[[8, 7, 6]]) and valid.all())
    record(7, "worked-example shapes", ok,
           f"encoder {e.shape}, window {H.shape} from z_9 z_8 z_7, v {fw.v[0].shape}, "
           f"g {fw.g[0].shape}, features {feats.shape}")
