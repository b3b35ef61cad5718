import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdm_spam.embed import make_batch
from mdm_spam.ingest import NORMAL, SPAMMER, Corpus, UserSequence
from mdm_spam.mdm import COMPONENTS, MdmConfig, init_params, score_batch
from mdm_spam.numerics import finite_diff_check
from mdm_spam.synth import SynthConfig, synth_generate
from mdm_spam.train import (TrainConfig, active_keys, objective, pair_loss, pair_loss_grad,
                            train_mdm, write_trace)

from conftest import WORKED

TOY = Corpus([UserSequence(0, WORKED, SPAMMER), UserSequence(1, (5, 5, 5, 5), SPAMMER),
              UserSequence(2, (3, 2, 4, 1), NORMAL), UserSequence(3, (2, 4, 3), NORMAL)])


def test_pair_loss_values():
    assert pair_loss(0.3, 0.3) == pytest.approx(math.log(2))
    assert pair_loss(20.0, 0.0) < 1e-8
    assert pair_loss(-800.0, 0.0) == pytest.approx(800.0)


@pytest.mark.property
@settings(max_examples=100)
@given(st.floats(-500, 500), st.floats(-500, 500))
def test_pair_loss_gradient_signs(s, l):
    gs, gl = pair_loss_grad(s, l)
    assert gs <= 0 <= gl
    assert gs == -gl
    if abs(s - l) < 30:
        assert gs < 0 < gl


def _objective_check(cfg: MdmConfig, lam=0.1, seed=0):
    p = init_params(cfg, seed, scale=0.5)
    batch = make_batch(TOY.sequences, 7, bag=cfg.relation_sum == "bag")
    spam, normal = [0, 1, 0, 1], [2, 2, 3, 3]
    keys = active_keys(p)
    _, _, _, grads = objective(p, batch, spam, normal, lam, keys)

    def loss(t):
        return objective(p.with_tensors({**p.tensors, **t}), batch, spam, normal,
                         lam, keys, grad=False)[0]

    grads["emb_in"][0] = 0.0
    return finite_diff_check(loss, {k: p.tensors[k] for k in keys}, grads)


@pytest.mark.parametrize("comp", COMPONENTS)
def test_objective_gradient_per_component(comp):
    assert _objective_check(MdmConfig(d=3, n=2, k=2, L=2, components=comp)) < 1e-6


@pytest.mark.parametrize("window,rsum", [("eq5", "set"), ("s45", "bag")])
def test_objective_gradient_variants(window, rsum):
    assert _objective_check(MdmConfig(d=3, n=3, k=1, L=1, window=window,
                                      relation_sum=rsum)) < 1e-6


def test_active_keys_follow_components():
    p = init_params(MdmConfig(d=2, components="repr"))
    assert "lstm_wx" not in active_keys(p)
    assert "res_e_w" in active_keys(init_params(MdmConfig(d=2)))
    assert "rel" not in active_keys(p, freeze_embed=True)


def test_single_class_corpus_rejected():
    only_spam = Corpus([s for s in TOY.sequences if s.label == SPAMMER])
    with pytest.raises(ValueError):
        train_mdm(only_spam, init_params(MdmConfig(d=2)), TrainConfig(epochs=1))


def test_same_seed_same_trace():
    p = init_params(MdmConfig(d=3, n=2, k=1, L=1))
    cfg = TrainConfig(epochs=4, batch_pairs=4, seed=5, tol=0)
    a, b = train_mdm(TOY, p, cfg), train_mdm(TOY, p, cfg)
    assert a.trace == b.trace
    for k in a.params.tensors:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_training_does_not_touch_input():
    p = init_params(MdmConfig(d=3, n=2, k=1, L=1))
    before = p.copy()
    train_mdm(TOY, p, TrainConfig(epochs=2, batch_pairs=4))
    for k in p.tensors:
        np.testing.assert_array_equal(p[k], before[k])


def test_large_penalty_shrinks_parameters():
    p = init_params(MdmConfig(d=3, n=2, k=1, L=1), scale=0.5)
    # Adam moves each coordinate by about lr per step: 100 steps cover the init range
    base = dict(epochs=100, batch_pairs=4, lr=1e-2, tol=0)
    free = train_mdm(TOY, p, TrainConfig(lam=0.0, **base)).params
    tight = train_mdm(TOY, p, TrainConfig(lam=1e6, **base)).params
    keys = active_keys(p)
    assert tight.frobenius_sq(keys) < 0.01 * free.frobenius_sq(keys)


def test_padding_row_stays_zero():
    p = init_params(MdmConfig(d=3, n=2, k=1, L=1))
    out = train_mdm(TOY, p, TrainConfig(epochs=3, batch_pairs=4)).params
    np.testing.assert_array_equal(out["emb_in"][0], 0.0)


def test_trace_file(tmp_path):
    res = train_mdm(TOY, init_params(MdmConfig(d=2, n=2, k=1, L=1)),
                    TrainConfig(epochs=2, batch_pairs=2, tol=0))
    write_trace(res.trace, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_pair_loss,frobenius_term"
    assert len(lines) == 3


@pytest.mark.slow
def test_synthetic_training_lowers_loss_and_ranks_spammers():
    corpus = synth_generate(SynthConfig(n_users=1000))
    p = init_params(MdmConfig(d=8, n=4, k=2, L=2))
    res = train_mdm(corpus, p, TrainConfig(epochs=20, lr=3e-3))
    assert res.trace[-1].mean_pair_loss < res.trace[0].mean_pair_loss
    phi = score_batch(corpus.sequences, res.params)
    y = np.array([s.label for s in corpus.sequences])
    assert phi[y == SPAMMER].mean() > phi[y == NORMAL].mean()
