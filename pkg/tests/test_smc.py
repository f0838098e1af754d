import math

import numpy as np
import pytest

from sdhawkes.generate import SynthConfig, generate
from sdhawkes.smc import (
    EngineConfig,
    ParticleSystem,
    ess,
    incremental_weight,
    proposal_distribution,
    systematic_resample,
)
from sdhawkes.types import GeoPost, Hyperparams, Particle, PatternStats

from oracles import enumerate_posterior


def base_hyper(**kw):
    defaults = dict(lambda0=10.0, theta0=1.0, beta_space=0.01, alpha_time=0.1,
                    beta_time=0.2, psi_tau=(1.0,), vocab_size=15, n_particles=4)
    defaults.update(kw)
    return Hyperparams(**defaults)


def make_stream(n_posts, seed=0, hyper=None, **cfg_kw):
    hyper = hyper or base_hyper()
    cfg = SynthConfig(hyper=hyper, n_posts=n_posts, seed=seed, **cfg_kw)
    return generate(cfg).posts


# ----------------------------------------------------------------------
# proposal


def test_proposal_first_post():
    hyper = base_hyper(lambda0=10.0, vocab_size=2, n_particles=1)
    particle = Particle()
    post = GeoPost(t=0.1, words=[0], x=0.5, y=0.5)
    labels, probs, log_q = proposal_distribution(particle, post, hyper)
    assert labels == []
    assert probs == [1.0]
    # Q_1 = prior(new)=1 * content prior marginal * spatial 1
    assert log_q == pytest.approx(math.log(0.5))


def test_proposal_hand_case_four_sevenths():
    hyper = base_hyper(lambda0=1.0, vocab_size=2, n_particles=1)
    config = EngineConfig(spatial=False, fixed_kernel=(1.0, 1.0))
    particle = Particle()
    stats = PatternStats(1, 1.0, 1.0, 0, owner=particle.token)
    stats.attach(0.0, [0], 0.5, 0.5, (1.0,))
    particle.patterns[0] = stats
    post = GeoPost(t=1e-12, words=[0], x=0.5, y=0.5)
    labels, probs, _ = proposal_distribution(particle, post, hyper, config=config)
    assert labels == [0]
    assert probs[0] == pytest.approx(4.0 / 7.0, rel=1e-9)
    assert probs[1] == pytest.approx(3.0 / 7.0, rel=1e-9)


def test_proposal_reduces_to_assignment_prior():
    # single-word vocabulary: the content marginal is exactly 1 for every
    # candidate, so with spatial off the proposal is the temporal prior
    from sdhawkes.hawkes import assignment_prior

    hyper = base_hyper(lambda0=2.0, vocab_size=1, n_particles=1)
    config = EngineConfig(spatial=False, fixed_kernel=(0.8, 1.0))
    particle = Particle()
    for k, t0 in enumerate([0.0, 0.4]):
        stats = PatternStats(1, 0.8, 1.0, 0, owner=particle.token)
        stats.attach(t0, [0, 0], 0.1, 0.1, (1.0,))
        particle.patterns[k] = stats
    post = GeoPost(t=0.9, words=[0], x=0.2, y=0.2)
    _, probs, _ = proposal_distribution(particle, post, hyper, config=config)
    _, prior = assignment_prior(particle, hyper, 0.9)
    assert probs == pytest.approx(prior, rel=1e-9)


def test_proposal_identical_counts_preserve_prior_ratios():
    # identical word counts across existing patterns: their content factors
    # cancel pairwise, so proposal odds between them equal prior odds
    from sdhawkes.hawkes import assignment_prior

    hyper = base_hyper(lambda0=2.0, vocab_size=3, n_particles=1)
    config = EngineConfig(spatial=False, fixed_kernel=(0.8, 1.0))
    particle = Particle()
    for k, t0 in enumerate([0.0, 0.4]):
        stats = PatternStats(1, 0.8, 1.0, 0, owner=particle.token)
        stats.attach(t0, [1, 2], 0.1, 0.1, (1.0,))
        particle.patterns[k] = stats
    post = GeoPost(t=0.9, words=[0], x=0.2, y=0.2)
    _, probs, _ = proposal_distribution(particle, post, hyper, config=config)
    _, prior = assignment_prior(particle, hyper, 0.9)
    assert probs[0] / probs[1] == pytest.approx(prior[0] / prior[1], rel=1e-9)


def test_proposal_sums_to_one():
    hyper = base_hyper(n_particles=1)
    system = ParticleSystem(hyper, EngineConfig(seed=3))
    for post in make_stream(40, seed=3):
        labels, probs, _ = proposal_distribution(
            system.particles[0], post, hyper, system=system)
        assert sum(probs) == pytest.approx(1.0, abs=1e-9)
        system.step(post)


# ----------------------------------------------------------------------
# weights


def test_incremental_weight_first_post():
    hyper = base_hyper(lambda0=10.0, vocab_size=2, n_particles=1)
    particle = Particle()
    post = GeoPost(t=0.1, words=[0], x=0.5, y=0.5)
    _, _, log_q = proposal_distribution(particle, post, hyper)
    log_mult = incremental_weight(particle, post, 0.0, hyper, t_prev=0.0)
    assert log_mult == pytest.approx(math.log(10.0) - 1.0)
    full = incremental_weight(particle, post, log_q, hyper, t_prev=0.0)
    assert full == pytest.approx(math.log(10.0) - 1.0 + math.log(0.5))


def test_incremental_weight_deterministic():
    hyper = base_hyper(n_particles=1)
    config = EngineConfig(fixed_kernel=(0.5, 1.0))

    def make_particle():
        particle = Particle()
        stats = PatternStats(1, 0.5, 1.0, 0, owner=particle.token)
        stats.attach(0.0, [1], 0.3, 0.3, (1.0,))
        stats.attach(0.5, [2], 0.4, 0.4, (1.0,))
        particle.patterns[0] = stats
        return particle

    post = GeoPost(t=0.8, words=[1], x=0.35, y=0.35)
    a = incremental_weight(make_particle(), post, -1.3, hyper, 0.5, config=config)
    b = incremental_weight(make_particle(), post, -1.3, hyper, 0.5, config=config)
    assert a == b
    assert math.isfinite(a)


def test_weight_increment_value():
    hyper = base_hyper(n_particles=2, lambda0=5.0)
    config = EngineConfig(seed=4)
    posts = make_stream(25, seed=4)
    system = ParticleSystem(hyper, config)
    for post in posts:
        t_prev = system.t_last
        lw_before = system.log_weights.copy()
        increments = []
        for p in system.particles:
            _, _, log_q = proposal_distribution(p, post, hyper, system=system)
            increments.append(
                incremental_weight(p, post, log_q, hyper, t_prev, config=config))
        resamples_before = system.n_resamples
        system.step(post)
        if system.n_resamples == resamples_before:
            raw = lw_before + np.array(increments)
            raw -= raw.max() + math.log(np.sum(np.exp(raw - raw.max())))
            assert np.allclose(raw, system.log_weights, atol=1e-10)


# ----------------------------------------------------------------------
# ess and resampling


def test_ess_examples():
    assert ess([0.25, 0.25, 0.25, 0.25]) == pytest.approx(4.0)
    assert ess([1.0, 0.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert ess([0.5, 0.5, 0.0, 0.0]) == pytest.approx(2.0)


def test_resample_uniform_identity():
    hyper = base_hyper(n_particles=4)
    system = ParticleSystem(hyper, EngineConfig(seed=0))
    for post in make_stream(5, seed=0):
        system.step(post)
    system.weights = np.full(4, 0.25)
    system.log_weights = np.log(system.weights)
    ids_before = [p.assignments() for p in system.particles]
    systematic_resample(system)
    ids_after = [p.assignments() for p in system.particles]
    assert ids_before == ids_after
    assert np.allclose(system.weights, 0.25)


def test_resample_degenerate():
    hyper = base_hyper(n_particles=4)
    system = ParticleSystem(hyper, EngineConfig(seed=1))
    for post in make_stream(5, seed=1):
        system.step(post)
    target = system.particles[2].assignments()
    system.weights = np.array([0.0, 0.0, 1.0, 0.0])
    system.log_weights = np.array([-np.inf, -np.inf, 0.0, -np.inf])
    systematic_resample(system)
    for p in system.particles:
        assert p.assignments() == target


def test_resample_unbiasedness():
    hyper = base_hyper(n_particles=5)
    weights = np.array([0.05, 0.1, 0.2, 0.25, 0.4])
    counts = np.zeros(5)
    n_rounds = 10_000
    rng = np.random.default_rng(5)
    for _ in range(n_rounds):
        u = rng.random()
        positions = (np.arange(5) + u) / 5
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, positions, side="right")
        counts += np.bincount(idx, minlength=5)
    expected = 5 * weights
    got = counts / n_rounds
    assert np.allclose(got, expected, atol=0.02)
    # offspring count is floor or ceil of n*w in every single round
    for _ in range(200):
        u = rng.random()
        positions = (np.arange(5) + u) / 5
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, positions, side="right")
        c = np.bincount(idx, minlength=5)
        assert all(math.floor(5 * w) <= ci <= math.ceil(5 * w)
                   for w, ci in zip(weights, c))


def test_resample_triggering():
    hyper = base_hyper(n_particles=4, kappa_thresh=0.9)
    system = ParticleSystem(hyper, EngineConfig(seed=2))
    for post in make_stream(60, seed=2):
        system.step(post)
    assert system.n_resamples > 0

    single = ParticleSystem(base_hyper(n_particles=1), EngineConfig(seed=2))
    for post in make_stream(60, seed=2):
        single.step(post)
    assert single.n_resamples == 0
    assert single.weights[0] == 1.0


# ----------------------------------------------------------------------
# step contract


def test_step_contract():
    hyper = base_hyper(n_particles=4)
    system = ParticleSystem(hyper, EngineConfig(seed=6))
    posts = make_stream(80, seed=6)
    for i, post in enumerate(posts):
        system.step(post)
        assert abs(system.weights.sum() - 1.0) < 1e-12
        for p in system.particles:
            assert p.n == i + 1
            total = sum(s.n_posts for s in p.all_patterns().values())
            assert total == i + 1
            assert all(label < p.S for label in p.assignments())


def test_step_rejects_out_of_order():
    hyper = base_hyper(n_particles=1)
    system = ParticleSystem(hyper, EngineConfig())
    system.step(GeoPost(t=1.0, words=[0], x=0.5, y=0.5))
    with pytest.raises(ValueError):
        system.step(GeoPost(t=0.5, words=[0], x=0.5, y=0.5))


def test_state_replay_consistency():
    # after heavy resampling, every particle's pattern statistics must equal
    # a from-scratch replay of its assignment history (copy-on-write safety)
    hyper = base_hyper(n_particles=8)
    posts = make_stream(300, seed=7)
    for prune in (0.0, 1e-12):
        system = ParticleSystem(hyper, EngineConfig(seed=7, prune_threshold=prune))
        for post in posts:
            system.step(post)
        assert system.n_resamples > 0
        for particle in system.particles:
            assign = particle.assignments()
            replayed: dict[int, PatternStats] = {}
            for post, label in zip(posts, assign):
                if label not in replayed:
                    replayed[label] = PatternStats(
                        len(system.cache_taus), 0.0, 1.0, 0)
                replayed[label].attach(post.t, post.words, post.x, post.y,
                                       system.cache_taus)
            stored = particle.all_patterns()
            assert set(stored) == set(replayed)
            for label, rep in replayed.items():
                st = stored[label]
                assert st.n_posts == rep.n_posts
                assert st.event_times == rep.event_times
                assert st.word_counts == rep.word_counts
                assert st.sum_x == pytest.approx(rep.sum_x, rel=1e-9, abs=1e-12)
                assert st.m2 == pytest.approx(rep.m2, rel=1e-9, abs=1e-12)


def test_hidden_location_excluded_from_stats():
    hyper = base_hyper(n_particles=2)
    posts = make_stream(40, seed=8)
    hidden = {10, 25}
    system = ParticleSystem(hyper, EngineConfig(seed=8))
    system.run(posts, hidden=hidden)
    for particle in system.particles:
        assign = particle.assignments()
        stored = particle.all_patterns()
        for label, stats in stored.items():
            n_hidden_members = sum(
                1 for i, lab in enumerate(assign) if lab == label and i in hidden)
            assert stats.n_posts - stats.n_spatial == n_hidden_members


def test_degenerate_all_new_when_lambda0_dominates():
    hyper = base_hyper(lambda0=1e9, n_particles=2)
    config = EngineConfig(fixed_kernel=(1.0, 1.0), seed=9)
    posts = make_stream(50, seed=9)
    system = ParticleSystem(hyper, config)
    for post in posts:
        system.step(post)
    for particle in system.particles:
        assert particle.assignments() == list(range(50))


# ----------------------------------------------------------------------
# map estimate


def test_map_estimate_single_particle():
    hyper = base_hyper(n_particles=1)
    system = ParticleSystem(hyper, EngineConfig(seed=10))
    posts = make_stream(30, seed=10)
    for post in posts:
        system.step(post)
    result = system.map_estimate()
    assert result.assignments == system.particles[0].assignments()
    assert len(result.assignments) == 30
    assert sum(s.size for s in result.summaries) == 30


def test_map_estimate_weight_ordering():
    hyper = base_hyper(n_particles=2)
    system = ParticleSystem(hyper, EngineConfig(seed=11))
    for post in make_stream(10, seed=11):
        system.step(post)
    system.weights = np.array([0.7, 0.3])
    assert system.map_estimate().assignments == system.particles[0].assignments()
    system.weights = np.array([0.3, 0.7])
    assert system.map_estimate().assignments == system.particles[1].assignments()


def test_map_estimate_empty_errors():
    system = ParticleSystem(base_hyper(n_particles=1), EngineConfig())
    with pytest.raises(ValueError):
        system.map_estimate()


# ----------------------------------------------------------------------
# posterior correctness (small-scale; the full check lives in acceptance)


def test_smc_approaches_enumerated_posterior():
    hyper = base_hyper(lambda0=1.0, vocab_size=4, n_particles=3000,
                       beta_space=0.05)
    alpha0, tau0 = 1.2, 1.0
    gen_cfg = SynthConfig(hyper=base_hyper(lambda0=1.0, vocab_size=4),
                          n_posts=6, n_words=2, sigma0=0.1, alpha0=alpha0,
                          seed=12)
    posts = generate(gen_cfg).posts
    exact = enumerate_posterior(posts, hyper, alpha0, tau0, spatial=True)

    system = ParticleSystem(hyper, EngineConfig(fixed_kernel=(alpha0, tau0),
                                                seed=12))
    for post in posts:
        system.step(post)
    approx: dict[tuple, float] = {}
    for w, p in zip(system.weights, system.particles):
        key = tuple(p.assignments())
        approx[key] = approx.get(key, 0.0) + float(w)
    tv = 0.5 * sum(abs(exact.get(k, 0.0) - approx.get(k, 0.0))
                   for k in set(exact) | set(approx))
    assert tv < 0.1


# ----------------------------------------------------------------------
# checkpointing


def test_checkpoint_resume_bit_for_bit(tmp_path):
    hyper = base_hyper(n_particles=4)
    posts = make_stream(80, seed=13)
    straight = ParticleSystem(hyper, EngineConfig(seed=13))
    for post in posts:
        straight.step(post)

    resumed = ParticleSystem(hyper, EngineConfig(seed=13))
    for post in posts[:40]:
        resumed.step(post)
    path = tmp_path / "ckpt.json"
    resumed.save_checkpoint(path)
    resumed = ParticleSystem.load_checkpoint(path)
    for post in posts[40:]:
        resumed.step(post)

    assert np.array_equal(straight.log_weights, resumed.log_weights)
    assert straight.t_last == resumed.t_last
    for a, b in zip(straight.particles, resumed.particles):
        assert a.assignments() == b.assignments()
        pa = a.all_patterns()
        pb = b.all_patterns()
        assert set(pa) == set(pb)
        for label in pa:
            assert pa[label].event_times == pb[label].event_times
            assert pa[label].decay == pb[label].decay
            assert pa[label].alpha == pb[label].alpha
    ra = straight.map_estimate()
    rb = resumed.map_estimate()
    assert ra.assignments == rb.assignments
    assert ra.kernels == rb.kernels


def test_checkpoint_version_guard(tmp_path):
    system = ParticleSystem(base_hyper(n_particles=1), EngineConfig())
    system.step(GeoPost(t=0.1, words=[0], x=0.5, y=0.5))
    path = tmp_path / "ckpt.json"
    system.save_checkpoint(path)
    import json

    payload = json.loads(path.read_text())
    payload["version"] = 999
    path.write_text(json.dumps(payload))
    with pytest.raises(ValueError):
        ParticleSystem.load_checkpoint(path)


# ----------------------------------------------------------------------
# pruning


def test_prior_draw_kernel_init():
    hyper = base_hyper(n_particles=2)
    posts = make_stream(60, seed=15)
    a = ParticleSystem(hyper, EngineConfig(seed=15, init_kernel="prior_draw"))
    b = ParticleSystem(hyper, EngineConfig(seed=15, init_kernel="prior_draw"))
    for post in posts:
        a.step(post)
        b.step(post)
    assert a.map_estimate().assignments == b.map_estimate().assignments
    # singleton patterns carry drawn kernels, which vary across patterns
    singles = [s for p in a.particles for s in p.all_patterns().values()
               if s.n_posts == 1]
    if len(singles) >= 2:
        assert len({s.alpha for s in singles}) > 1
    with pytest.raises(ValueError):
        ParticleSystem(hyper, EngineConfig(init_kernel="bogus"))


def test_fast_refit_mode_runs():
    hyper = base_hyper(n_particles=2)
    posts = make_stream(120, seed=16)
    fast = ParticleSystem(hyper, EngineConfig(seed=16, refit_all=False))
    for post in posts:
        fast.step(post)
    result = fast.map_estimate()
    assert len(result.assignments) == 120
    assert sum(s.size for s in result.summaries) == 120
    for label, (alpha, tau) in result.kernels.items():
        assert alpha >= 0 and tau in hyper.psi_tau


def test_pruning_preserves_labels_and_results():
    hyper = base_hyper(n_particles=2)
    posts = make_stream(250, seed=14)
    exact = ParticleSystem(hyper, EngineConfig(seed=14))
    pruned = ParticleSystem(hyper, EngineConfig(seed=14, prune_threshold=1e-12))
    for post in posts:
        exact.step(post)
        pruned.step(post)
    res = pruned.map_estimate()
    assert len(res.assignments) == 250
    assert sum(s.size for s in res.summaries) == 250
    # at this scale nothing decays below 1e-12 * lambda0 relative weight: the
    # two runs should agree on the labeling
    assert res.assignments == exact.map_estimate().assignments
