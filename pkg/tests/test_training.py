import numpy as np
import pytest

from avllm.config import RunConfig
from avllm.curation.toy import toy_corpus
from avllm.encoding import ModalityMismatchError
from avllm.modality import Modality
from avllm.numerics import analytic_grad, numeric_grad
from avllm.training.routing import BranchActivation, build_prefix, forward_with_routing, masked_backward, may_receive_grad
from avllm.training.sampler import EmptyPoolError, ModalitySampler, allocate_counts, sample_batch
from avllm.training.stages import SchedulePlan, StageConfig, largest_remainder, phase_budgets, stages_from_config
from avllm.training.trainer import EmptyDatasetError, StageTrainer, run_schedule

from conftest import tiny_config, tiny_model

SFT = StageConfig("sft", 1e-2, 6, 1)
PRE = StageConfig("pretrain", 1e-2, 6, 1)


def one(mod: Modality, task="conversation", seed=0):
    return next(r for r in toy_corpus(2, task, seed) if r.modality is mod)


def test_branch_activation_from_token():
    assert BranchActivation.from_modality("VIS") == BranchActivation(True, False)
    assert BranchActivation.from_modality("AUD") == BranchActivation(False, True)
    assert BranchActivation.from_modality("AUD_VIS") == BranchActivation(True, True)
    with pytest.raises(ValueError):
        BranchActivation(False, False)


@pytest.mark.parametrize("mod,length,calls", [
    (Modality.VIS, 2 + 4, (1, 0)),
    (Modality.AUD, 2, (0, 1)),
    (Modality.AUD_VIS, 2 + 4 + 2, (1, 1)),
])
def test_routing_runs_only_active_branches(mod, length, calls):
    model = tiny_model()
    rec = one(mod)
    frames, audio = model.media_for(rec)
    prefix, _ = build_prefix(model, rec, frames, audio)
    assert len(prefix) == length
    assert (model.encoder.visual_calls, model.encoder.audio_calls) == calls


def test_media_modality_mismatch():
    model = tiny_model()
    vis = one(Modality.VIS)
    frames, _ = model.media_for(vis)
    _, audio = model.media_for(one(Modality.AUD))
    with pytest.raises(ModalityMismatchError):
        build_prefix(model, vis, frames, audio)


def _nonzero(store):
    return {p.name for p in store if p.grad is not None and np.any(p.grad != 0)}


@pytest.mark.parametrize("stage", [PRE, SFT], ids=["pretrain", "sft"])
@pytest.mark.parametrize("mod", list(Modality))
def test_gradient_routing_grid(stage, mod):
    model = tiny_model()
    model.store.set_trainable(stage.trainable_prefixes)
    loss, act = forward_with_routing(one(mod), model)
    masked_backward(loss, act, stage, model.store)
    predicted = {n for n in model.store.names() if may_receive_grad(n, act, stage)}
    assert _nonzero(model.store) == predicted
    assert all(model.store[n].grad is None for n in set(model.store.names()) - predicted)


def test_visual_sample_sft_grads():
    model = tiny_model()
    model.store.set_trainable(SFT.trainable_prefixes)
    loss, act = forward_with_routing(one(Modality.VIS), model)
    grads = masked_backward(loss, act, SFT, model.store)
    assert "projector.audio.W" not in grads
    assert np.any(grads["projector.visual_temporal.W"] != 0)


def test_pretrain_freezes_lm_and_encoders():
    model = tiny_model()
    model.store.set_trainable(("projector.", "lm."))
    loss, act = forward_with_routing(one(Modality.AUD_VIS), model)
    grads = masked_backward(loss, act, PRE, model.store)
    assert not any(n.startswith(("lm.", "encoder.")) for n in grads)


@pytest.mark.parametrize("name", ["projector.visual_temporal.W", "projector.visual_spatial.b", "projector.audio.W", "projector.audio.b"])
def test_audio_visual_projector_grads_match_finite_differences(name):
    model = tiny_model().astype(np.float64)
    rec = one(Modality.AUD_VIS)
    p = model.store[name]
    model.store.set_trainable(SFT.trainable_prefixes)
    f = lambda _: forward_with_routing(rec, model)[0]
    a, n = analytic_grad(f, p), numeric_grad(f, p)
    # entries near 1e-8 sit at the f64 roundoff floor, so scale by the largest entry
    assert np.abs(a).max() > 0
    assert np.abs(a - n).max() <= 1e-6 * np.abs(a).max()


# -- sampling ---------------------------------------------------------------

def pool(n=12):
    return toy_corpus(n, "conversation", 0)


def test_uniform_thirds():
    b = sample_batch(pool(), {"VIS": 1 / 3, "AUD": 1 / 3, "AUD_VIS": 1 / 3}, 6, np.random.default_rng(0))
    assert sorted(r.modality.value for r in b) == ["AUD"] * 2 + ["AUD_VIS"] * 2 + ["VIS"] * 2


def test_all_visual():
    b = sample_batch(pool(), {"VIS": 1.0, "AUD": 0.0, "AUD_VIS": 0.0}, 6, np.random.default_rng(0))
    assert all(r.modality is Modality.VIS for r in b)


def test_remainder_rule():
    mix = {Modality.VIS: 0.5, Modality.AUD: 0.25, Modality.AUD_VIS: 0.25}
    seen = set()
    for seed in range(20):
        c = allocate_counts(6, mix, np.random.default_rng(seed))
        assert c[Modality.VIS] == 3 and {c[Modality.AUD], c[Modality.AUD_VIS]} == {1, 2}
        assert c == allocate_counts(6, mix, np.random.default_rng(seed))
        seen.add(c[Modality.AUD])
    assert seen == {1, 2}


def test_absent_modality_error():
    only_vis = [r for r in pool() if r.modality is Modality.VIS]
    with pytest.raises(EmptyPoolError):
        sample_batch(only_vis, {"VIS": 0.5, "AUD": 0.5}, 4, np.random.default_rng(0))


def test_ratios_must_sum_to_one():
    with pytest.raises(ValueError):
        sample_batch(pool(), {"VIS": 0.5, "AUD": 0.2}, 4, np.random.default_rng(0))


def test_without_replacement_per_epoch():
    data = [r for r in pool(12) if r.modality is Modality.AUD]
    s = ModalitySampler(data, 4, np.random.default_rng(1))
    ids = [r.id for _ in range(3) for r in s.sample()]
    assert sorted(ids) == sorted(r.id for r in data)


def test_largest_remainder_sums():
    assert sum(largest_remainder(17, [1, 2, 3.5])) == 17


# -- stages -----------------------------------------------------------------

def test_stage_defaults():
    pre, sft = stages_from_config(RunConfig())
    assert (pre.lr, pre.epochs, pre.warmup_ratio) == (2e-3, 3, 0.03)
    assert (sft.lr, sft.epochs) == (2e-5, 1)
    assert pre.betas == (0.9, 0.98)


def test_stage_trainable_rules():
    assert PRE.trains("projector.audio.W") and not PRE.trains("lm.head.W")
    assert SFT.trains("lm.head.W") and SFT.trains("projector.audio.b")
    assert not PRE.trains("encoder.audio.fc1.W") and not SFT.trains("encoder.visual.cls")


def test_schedule_phase_orders():
    labels = lambda k: [ph.modalities for ph in SchedulePlan.named(k).phases]
    assert labels("mat") == [(Modality.VIS, Modality.AUD, Modality.AUD_VIS)]
    assert labels("pt1") == [(Modality.AUD_VIS,), (Modality.VIS,), (Modality.AUD,)]
    assert labels("pt2") == [(Modality.VIS,), (Modality.AUD,), (Modality.AUD_VIS,)]


def test_phase_budgets_proportional():
    assert phase_budgets(30, [10, 10, 10]) == [10, 10, 10]
    assert sum(phase_budgets(7, [5, 3, 9])) == 7


def test_total_steps():
    assert StageConfig("sft", 1e-3, 8, 2).total_steps(20) == 6
    assert StageConfig("sft", 1e-3, 8, 2, max_steps=5).total_steps(20) == 5


# -- trainer ----------------------------------------------------------------

def _run(seed=0, kind="mat", steps=4):
    model = tiny_model(seed=seed)
    stages = [StageConfig("pretrain", 1e-2, 6, 1, max_steps=steps), StageConfig("sft", 1e-2, 6, 1, max_steps=steps)]
    res = run_schedule(model, toy_corpus(4, "caption", seed), toy_corpus(4, "conversation", seed), kind, stages, seed)
    return model, res


def test_identical_runs_identical_logs():
    _, a = _run()
    _, b = _run()
    assert [r["loss"] for r in a.logs] == [r["loss"] for r in b.logs]
    assert a.logs == b.logs


def test_log_fields():
    _, res = _run()
    rec = res.logs[0]
    assert set(rec) >= {"step", "phase", "lr", "loss", "counts", "stage"}
    assert sum(rec["counts"].values()) == 6


def test_mat_one_phase_per_stage():
    _, res = _run()
    assert [(p["stage"], p["phase"]) for p in res.phases] == [("pretrain", "VIS+AUD+AUD_VIS"), ("sft", "VIS+AUD+AUD_VIS")]


def test_pt1_phase_order_in_logs():
    _, res = _run(kind="pt1", steps=6)
    assert [p["phase"] for p in res.phases if p["stage"] == "sft"] == ["AUD_VIS", "VIS", "AUD"]


def test_freeze_law():
    model = tiny_model()
    init = model.store.state_dict()
    cfg_stages = [StageConfig("pretrain", 1e-2, 6, 1, max_steps=3)]
    run_schedule(model, toy_corpus(3, "caption", 0), toy_corpus(3, "conversation", 0), "mat", cfg_stages)
    after_pre = model.store.state_dict()
    for n in model.store.names():
        if n.startswith(("encoder.", "lm.")):
            assert after_pre[n].tobytes() == init[n].tobytes(), n
    assert any(after_pre[n].tobytes() != init[n].tobytes() for n in model.store.names() if n.startswith("projector."))


def test_optimizer_isolation_for_unused_branch():
    model = tiny_model()
    vis = [r for r in toy_corpus(4, "conversation", 0) if r.modality is Modality.VIS]
    tr = StageTrainer(model, vis, StageConfig("sft", 1e-2, 4, 1, max_steps=3), SchedulePlan.named("mat"))
    audio_before = model.store["projector.audio.W"].data.tobytes()
    tr.run()
    assert not np.any(tr.opt.m["projector.audio.W"]) and not np.any(tr.opt.v["projector.audio.W"])
    assert model.store["projector.audio.W"].data.tobytes() == audio_before
    assert all(not n.startswith("encoder.") for n in tr.opt.m)


def test_empty_phase_rejected():
    model = tiny_model()
    no_audio = [r for r in toy_corpus(3, "conversation", 0) if r.modality is not Modality.AUD]
    with pytest.raises(EmptyDatasetError):
        StageTrainer(model, no_audio, SFT, SchedulePlan.named("pt1"))


def test_run_schedule_needs_all_modalities():
    model = tiny_model()
    vis = [r for r in toy_corpus(3, "conversation", 0) if r.modality is Modality.VIS]
    with pytest.raises(EmptyDatasetError):
        run_schedule(model, vis, vis, "mat", [PRE])


def test_lr_follows_schedule():
    model = tiny_model()
    tr = StageTrainer(model, toy_corpus(4, "conversation", 0), StageConfig("sft", 0.5, 6, 1, max_steps=10, warmup_ratio=0.2), SchedulePlan.named("mat"))
    lrs = [r["lr"] for r in tr.run()]
    assert lrs[:3] == [0.0, 0.25, 0.5]
    assert all(a >= b for a, b in zip(lrs[2:], lrs[3:]))


@pytest.mark.parametrize("seed", range(10))
def test_loss_finite_default_config(seed):
    cfg = RunConfig()
    model = tiny_model(cfg, seed)
    for stage in (StageConfig.from_settings("pretrain", cfg.pretrain), StageConfig.from_settings("sft", cfg.sft)):
        stage = StageConfig(stage.name, stage.lr, 4, 1, max_steps=2)
        tr = StageTrainer(model, toy_corpus(2, "conversation", seed), stage, SchedulePlan.named("mat"), seed, encoder_cache={})
        assert all(np.isfinite(r["loss"]) for r in tr.run())
