"""Online particle-filter inference over pattern assignments.

Each incoming post is scored against every live pattern (and "new") with the
product of the temporal prior, the collapsed content marginal and the
collapsed spatial marginal; the particle samples an assignment from that
proposal and multiplies its weight by p(t_n | history) * Q_n, where Q_n is
the proposal's pre-normalization sum. Systematic resampling fires whenever
the effective sample size drops below kappa_thresh * n_particles.

Particles use copy-on-write state: pattern statistics are shared between
resampled offspring until one of them mutates, assignment histories are
shared cons chains, and (optionally) patterns whose possible intensity
contribution has decayed to nothing are retired to a shared archive. This
keeps the per-post cost proportional to the number of *live* patterns.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from math import exp, lgamma, log, log1p

import numpy as np

from .types import (
    ClusteringResult,
    GeoPost,
    Hyperparams,
    Particle,
    PatternStats,
    pattern_summary,
)

__all__ = [
    "EngineConfig",
    "ParticleSystem",
    "ess",
    "systematic_resample",
    "proposal_distribution",
    "incremental_weight",
]

ALPHA_FLOOR = 1e-8
CHECKPOINT_VERSION = 1


@dataclass(slots=True)
class EngineConfig:
    """Inference options.

    spatial=False disables the location factor entirely (the content+time
    baseline). fixed_kernel pins every pattern's (alpha, tau) and disables
    refitting. prune_threshold > 0 retires patterns whose maximal intensity
    contribution falls below prune_threshold * lambda0 (an approximation;
    leave at 0 for exact runs). refit_all=False refits only the pattern that
    received the post, leaving other kernels at their last attach-time fit.
    """

    spatial: bool = True
    fixed_kernel: tuple[float, float] | None = None
    init_kernel: str = "prior_mean"  # or "prior_draw"
    refit_all: bool = True
    prune_threshold: float = 0.0
    seed: int = 0


def ess(weights) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


class ParticleSystem:
    """A set of weighted assignment hypotheses advanced one post at a time."""

    def __init__(self, hyper: Hyperparams, config: EngineConfig | None = None):
        hyper.validate()
        self.hyper = hyper
        self.config = config or EngineConfig()
        if self.config.init_kernel not in ("prior_mean", "prior_draw"):
            raise ValueError(f"unknown init_kernel {self.config.init_kernel!r}")
        if self.config.fixed_kernel is not None:
            alpha0, tau0 = self.config.fixed_kernel
            if alpha0 < 0 or tau0 <= 0:
                raise ValueError("fixed kernel needs alpha >= 0 and tau > 0")
            self.cache_taus: tuple[float, ...] = (tau0,)
        else:
            self.cache_taus = hyper.psi_tau
        self.n = 0
        self.t_last = 0.0
        self.particles = [Particle() for _ in range(hyper.n_particles)]
        self.log_weights = np.zeros(hyper.n_particles)
        self.weights = np.full(hyper.n_particles, 1.0 / hyper.n_particles)
        seq = np.random.SeedSequence(self.config.seed)
        children = seq.spawn(hyper.n_particles + 1)
        self.rngs = [np.random.default_rng(s) for s in children[:-1]]
        self.resample_rng = np.random.default_rng(children[-1])
        self.n_resamples = 0
        self.pattern_counts: list[int] = []

    # ------------------------------------------------------------------
    # kernel selection

    def _new_pattern_stats(self, owner: object, rng: np.random.Generator) -> PatternStats:
        cfg = self.config
        if cfg.fixed_kernel is not None:
            alpha0, tau0 = cfg.fixed_kernel
            return PatternStats(1, alpha0, tau0, 0, owner=owner)
        hyper = self.hyper
        if cfg.init_kernel == "prior_draw":
            alpha0 = float(rng.gamma(hyper.alpha_time, 1.0 / hyper.beta_time))
            idx = int(rng.integers(0, len(hyper.psi_tau)))
        else:
            alpha0 = hyper.alpha_time / hyper.beta_time
            idx = 0
        return PatternStats(len(self.cache_taus), alpha0, hyper.psi_tau[idx], idx,
                            owner=owner)

    def _fit_kernel(self, stats: PatternStats, t_now: float) -> tuple[float, float, int]:
        """Restricted MLE of (alpha, tau) over the grid, given data to t_now."""
        hyper = self.hyper
        a = hyper.alpha_time
        b = hyper.beta_time
        n = stats.n_posts
        numer = n - 2.0 + a
        k_log = a - 2.0 + n
        dt_ref = t_now - stats.t_ref
        best_obj = -math.inf
        best = (ALPHA_FLOOR, hyper.psi_tau[0], 0)
        for i, tau in enumerate(hyper.psi_tau):
            big_b = tau * (n - stats.decay[i] * exp(-dt_ref / tau))
            denom = b + big_b
            alpha_hat = numer / denom if numer > 0 else ALPHA_FLOOR
            obj = k_log * log(alpha_hat) - denom * alpha_hat + stats.log_trigger[i]
            if obj > best_obj:
                best_obj = obj
                best = (alpha_hat, tau, i)
        return best

    def _current_kernel(self, stats: PatternStats, t_prev: float) -> tuple[float, float, int]:
        cfg = self.config
        if cfg.fixed_kernel is not None or stats.n_posts < 2 or not cfg.refit_all:
            return stats.alpha, stats.tau, stats.tau_idx
        return self._fit_kernel(stats, t_prev)

    # ------------------------------------------------------------------
    # stepping

    @staticmethod
    def _doc_terms(words: list[int], hyper: Hyperparams):
        counts: dict[int, int] = {}
        for w in words:
            counts[w] = counts.get(w, 0) + 1
        items = list(counts.items())
        c_d = len(words)
        theta0 = hyper.theta0
        vt = hyper.vocab_size * theta0
        log_new = lgamma(vt) - lgamma(c_d + vt)
        for _v, c in items:
            log_new += lgamma(c + theta0) - lgamma(theta0)
        return items, c_d, log_new

    def step(self, post: GeoPost, observe_location: bool = True) -> "ParticleSystem":
        """Assimilate one post: propose, weight, refit, maybe resample."""
        t = post.t
        if t < self.t_last:
            raise ValueError(f"out-of-order post: t={t} < {self.t_last}")
        hyper = self.hyper
        cfg = self.config
        psi = self.cache_taus
        lam0 = hyper.lambda0
        theta0 = hyper.theta0
        vt = hyper.vocab_size * theta0
        beta = hyper.beta_space
        t_prev = self.t_last
        dt = t - t_prev
        rx = post.x
        ry = post.y
        spatial_obs = cfg.spatial and observe_location
        doc_items, c_d, log_content_new = self._doc_terms(post.words, hyper)
        prune_abs = cfg.prune_threshold * lam0
        two_pi = 2.0 * math.pi

        for p_idx, particle in enumerate(self.particles):
            rng = self.rngs[p_idx]
            patterns = particle.patterns
            labels = []
            scores = []
            kernels = []
            lam_t = lam0
            big_lambda = lam0 * dt
            prune_labels = None
            for label, stats in patterns.items():
                alpha, tau, tau_idx = self._current_kernel(stats, t_prev)
                e_ref = exp(-(t - stats.t_ref) / tau)
                if prune_abs > 0.0 and alpha * stats.n_posts * e_ref < prune_abs:
                    if prune_labels is None:
                        prune_labels = []
                    prune_labels.append((label, alpha, tau, tau_idx))
                    continue
                s_prev = stats.decay[tau_idx] * exp(-(t_prev - stats.t_ref) / tau)
                e_dt = exp(-dt / tau)
                lam_k = alpha * s_prev * e_dt
                lam_t += lam_k
                big_lambda += alpha * tau * s_prev * (1.0 - e_dt)
                if lam_k <= 0.0:
                    ls = -math.inf
                else:
                    ls = log(lam_k)
                    cw = stats.word_counts
                    get = cw.get
                    ct = stats.total_words
                    ls += lgamma(ct + vt) - lgamma(ct + c_d + vt)
                    for v, c in doc_items:
                        base = get(v, 0) + theta0
                        ls += lgamma(base + c) - lgamma(base)
                    ns = stats.n_spatial
                    if spatial_obs and ns > 0:
                        xi = beta + 0.5 * stats.m2
                        dx = rx - stats.mean_x
                        dy = ry - stats.mean_y
                        delta = ns / (2.0 * (ns + 1.0)) * (dx * dx + dy * dy)
                        ls += (log(ns * ns / (two_pi * (1.0 + ns)))
                               - log(xi) - (1.0 + ns) * log1p(delta / xi))
                labels.append(label)
                scores.append(ls)
                kernels.append((alpha, tau, tau_idx))
            if prune_labels is not None:
                for label, alpha, tau, tau_idx in prune_labels:
                    stats = patterns.pop(label)
                    if stats.owner is not particle.token:
                        stats = stats.copy(owner=particle.token)
                    stats.alpha = alpha
                    stats.tau = tau
                    stats.tau_idx = tau_idx
                    particle.archive = (label, stats, particle.archive)

            scores.append(log(lam0) + log_content_new)
            m = max(scores)
            exps = [exp(s - m) for s in scores]
            total = sum(exps)
            # weight update: log p(t|.) + log Q = -Lambda + logsumexp(scores)
            self.log_weights[p_idx] += m + log(total) - big_lambda

            u = rng.random() * total
            acc = 0.0
            choice = len(scores) - 1
            for i, e in enumerate(exps):
                acc += e
                if u <= acc:
                    choice = i
                    break

            if choice == len(scores) - 1:
                label = particle.S
                particle.S += 1
                stats = self._new_pattern_stats(particle.token, rng)
                patterns[label] = stats
            else:
                label = labels[choice]
                stats = particle.writable(label)
                alpha, tau, tau_idx = kernels[choice]
                stats.alpha = alpha
                stats.tau = tau
                stats.tau_idx = tau_idx
            stats.attach(t, post.words, rx, ry, psi, with_location=observe_location)
            if stats.n_posts >= 2 and cfg.fixed_kernel is None:
                stats.alpha, stats.tau, stats.tau_idx = self._fit_kernel(stats, t)
            particle.record_assignment(label)

        self.n += 1
        self.t_last = t
        self._normalize()
        n_p = len(self.particles)
        if n_p > 1 and ess(self.weights) < hyper.kappa_thresh * n_p:
            systematic_resample(self)
        return self

    def _normalize(self) -> None:
        m = float(np.max(self.log_weights))
        self.log_weights -= m + math.log(np.sum(np.exp(self.log_weights - m)))
        w = np.exp(self.log_weights)
        self.weights = w / w.sum()

    def run(self, posts, hidden: set[int] | None = None,
            checkpoint_every: int | None = None,
            checkpoint_path=None,
            track_pattern_counts: bool = False) -> "ParticleSystem":
        """Process a chronological stream; indices in ``hidden`` contribute
        no location information."""
        for post in posts:
            observe = hidden is None or self.n not in hidden
            self.step(post, observe_location=observe)
            if track_pattern_counts:
                best = int(np.argmax(self.weights))
                self.pattern_counts.append(self.particles[best].S)
            if (checkpoint_every and checkpoint_path
                    and self.n % checkpoint_every == 0):
                self.save_checkpoint(checkpoint_path)
        return self

    def predictive_logdensity(self, post: GeoPost, kind: str) -> float:
        """One-step-ahead predictive of the post's location or content.

        Marginalizes the next assignment over the temporal prior within each
        particle and mixes particles by weight:
        log sum_p w_p sum_s p(s | history_p, t) * factor(s), where factor is
        the spatial marginal (kind="spatial", new pattern contributing the
        constant 1) or the content marginal (kind="content").
        """
        if kind not in ("spatial", "content"):
            raise ValueError(f"unknown predictive kind {kind!r}")
        hyper = self.hyper
        t = post.t
        if t < self.t_last:
            raise ValueError("predictive queried before current time")
        t_prev = self.t_last
        theta0 = hyper.theta0
        vt = hyper.vocab_size * theta0
        beta = hyper.beta_space
        doc_items, c_d, log_content_new = self._doc_terms(post.words, hyper)
        total = 0.0
        for w_p, particle in zip(self.weights, self.particles):
            if w_p == 0.0:
                continue
            lams = []
            factors = []
            lam_t = hyper.lambda0
            for stats in particle.patterns.values():
                alpha, tau, tau_idx = self._current_kernel(stats, t_prev)
                lam_k = alpha * stats.decay[tau_idx] * exp(-(t - stats.t_ref) / tau)
                lam_t += lam_k
                if lam_k <= 0.0:
                    lams.append(0.0)
                    factors.append(0.0)
                    continue
                if kind == "spatial":
                    ns = stats.n_spatial
                    if ns == 0:
                        lf = 0.0
                    else:
                        xi = beta + 0.5 * stats.m2
                        dx = post.x - stats.mean_x
                        dy = post.y - stats.mean_y
                        delta = ns / (2.0 * (ns + 1.0)) * (dx * dx + dy * dy)
                        lf = (log(ns * ns / (2.0 * math.pi * (1.0 + ns)))
                              - log(xi) - (1.0 + ns) * log1p(delta / xi))
                else:
                    ct = stats.total_words
                    lf = lgamma(ct + vt) - lgamma(ct + c_d + vt)
                    for v, c in doc_items:
                        base = stats.word_counts.get(v, 0) + theta0
                        lf += lgamma(base + c) - lgamma(base)
                lams.append(lam_k)
                factors.append(exp(lf))
            new_factor = 1.0 if kind == "spatial" else exp(log_content_new)
            mix = hyper.lambda0 * new_factor
            for lam_k, f in zip(lams, factors):
                mix += lam_k * f
            total += w_p * mix / lam_t
        return log(total)

    # ------------------------------------------------------------------
    # results

    def map_estimate(self) -> ClusteringResult:
        """Labeling and pattern summaries of the maximum-mass history.

        Particles sharing an assignment history are duplicates of one
        hypothesis, so their weights are pooled and the history with the
        largest pooled weight wins (ties break toward the lowest particle
        index). Pooling matters: an individual particle's weight is a
        path-wise evidence product, which does not rank hypotheses by
        posterior mass once particle counts grow.
        """
        if self.n < 1:
            raise ValueError("no posts processed")
        mass: dict[tuple, float] = {}
        first_idx: dict[tuple, int] = {}
        for i, (w, p) in enumerate(zip(self.weights, self.particles)):
            key = tuple(p.assignments())
            mass[key] = mass.get(key, 0.0) + float(w)
            if key not in first_idx:
                first_idx[key] = i
        best_key = max(mass, key=lambda k: (mass[k], -first_idx[k]))
        best = first_idx[best_key]
        particle = self.particles[best]
        patterns = particle.all_patterns()
        kernels: dict[int, tuple[float, float]] = {}
        summaries = []
        for label, stats in patterns.items():
            if (self.config.fixed_kernel is None and self.config.refit_all
                    and stats.n_posts >= 2 and label in particle.patterns):
                alpha, tau, _ = self._fit_kernel(stats, self.t_last)
            else:
                alpha, tau = stats.alpha, stats.tau
            kernels[label] = (alpha, tau)
            summary = pattern_summary(stats, self.hyper.beta_space, label=label)
            summary.alpha = alpha
            summary.tau = tau
            summaries.append(summary)
        return ClusteringResult(
            assignments=particle.assignments(),
            summaries=summaries,
            weights=[float(w) for w in self.weights],
            patterns=patterns,
            kernels=kernels,
        )

    # ------------------------------------------------------------------
    # checkpointing

    def save_checkpoint(self, path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "n": self.n,
            "t_last": self.t_last,
            "n_resamples": self.n_resamples,
            "hyper": {**asdict(self.hyper), "psi_tau": list(self.hyper.psi_tau)},
            "config": {
                **asdict(self.config),
                "fixed_kernel": (list(self.config.fixed_kernel)
                                 if self.config.fixed_kernel else None),
            },
            "log_weights": [float(v) for v in self.log_weights],
            "resample_rng": _rng_state(self.resample_rng),
            "rngs": [_rng_state(r) for r in self.rngs],
            "pattern_counts": self.pattern_counts,
            "particles": [self._particle_payload(p) for p in self.particles],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    def _particle_payload(self, particle: Particle) -> dict:
        archive = []
        node = particle.archive
        while node is not None:
            label, stats, node = node
            archive.append([label, _stats_payload(stats)])
        archive.reverse()
        return {
            "S": particle.S,
            "assignments": particle.assignments(),
            "patterns": [[label, _stats_payload(stats)]
                         for label, stats in particle.patterns.items()],
            "archive": archive,
        }

    @classmethod
    def load_checkpoint(cls, path) -> "ParticleSystem":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        hyper_d = dict(payload["hyper"])
        hyper_d["psi_tau"] = tuple(hyper_d["psi_tau"])
        hyper = Hyperparams(**hyper_d)
        config_d = dict(payload["config"])
        if config_d.get("fixed_kernel") is not None:
            config_d["fixed_kernel"] = tuple(config_d["fixed_kernel"])
        system = cls(hyper, EngineConfig(**config_d))
        system.n = payload["n"]
        system.t_last = payload["t_last"]
        system.n_resamples = payload.get("n_resamples", 0)
        system.log_weights = np.array(payload["log_weights"], dtype=float)
        w = np.exp(system.log_weights)
        system.weights = w / w.sum()
        _set_rng_state(system.resample_rng, payload["resample_rng"])
        for rng, state in zip(system.rngs, payload["rngs"]):
            _set_rng_state(rng, state)
        system.pattern_counts = list(payload.get("pattern_counts", []))
        system.particles = [
            _particle_from_payload(p, len(system.cache_taus))
            for p in payload["particles"]
        ]
        return system


def systematic_resample(system: ParticleSystem) -> ParticleSystem:
    """Replace the particle set by systematic-resampled offspring.

    Offspring reuse parent state copy-on-write; weights reset to uniform.
    """
    n_p = len(system.particles)
    u = system.resample_rng.random()
    positions = (np.arange(n_p) + u) / n_p
    cum = np.cumsum(system.weights)
    cum[-1] = 1.0
    # side="right" so a zero-weight particle (cum[i] == cum[i-1]) can never
    # be selected, even when a position lands exactly on the boundary
    idx = np.minimum(np.searchsorted(cum, positions, side="right"), n_p - 1)
    counts = np.bincount(idx, minlength=n_p)
    new_particles: list[Particle | None] = [None] * n_p
    for parent_i, count in enumerate(counts):
        if count == 0:
            continue
        parent = system.particles[parent_i]
        slots = np.flatnonzero(idx == parent_i)
        if count > 1:
            parent.token = object()  # orphan its stats: any mutation copies
        new_particles[slots[0]] = parent
        for s in slots[1:]:
            new_particles[s] = parent.clone()
    system.particles = new_particles  # type: ignore[assignment]
    system.log_weights = np.zeros(n_p)
    system.weights = np.full(n_p, 1.0 / n_p)
    system.n_resamples += 1
    return system


def proposal_distribution(particle: Particle, post: GeoPost, hyper: Hyperparams,
                          config: EngineConfig | None = None,
                          system: ParticleSystem | None = None,
                          observe_location: bool = True):
    """Assignment proposal for one post under one particle.

    Returns (labels, probs, log_q): probs has one entry per label plus a
    final entry for "new"; log_q is the log of the pre-normalization sum
    over candidates of prior * content * spatial.
    """
    if system is None:
        system = _adhoc_system(hyper, config)
        system.t_last = max((s.t_ref for s in particle.patterns.values()),
                            default=0.0)
    cfg = system.config
    t = post.t
    t_prev = system.t_last
    doc_items, c_d, log_content_new = ParticleSystem._doc_terms(post.words, hyper)
    theta0 = hyper.theta0
    vt = hyper.vocab_size * theta0
    beta = hyper.beta_space
    spatial_obs = cfg.spatial and observe_location
    labels = []
    scores = []
    lam_t = hyper.lambda0
    for label, stats in particle.patterns.items():
        alpha, tau, tau_idx = system._current_kernel(stats, t_prev)
        lam_k = alpha * stats.decay[tau_idx] * exp(-(t - stats.t_ref) / tau)
        lam_t += lam_k
        if lam_k <= 0.0:
            ls = -math.inf
        else:
            ls = log(lam_k)
            ct = stats.total_words
            ls += lgamma(ct + vt) - lgamma(ct + c_d + vt)
            for v, c in doc_items:
                base = stats.word_counts.get(v, 0) + theta0
                ls += lgamma(base + c) - lgamma(base)
            if spatial_obs and stats.n_spatial > 0:
                ns = stats.n_spatial
                xi = beta + 0.5 * stats.m2
                dx = post.x - stats.mean_x
                dy = post.y - stats.mean_y
                delta = ns / (2.0 * (ns + 1.0)) * (dx * dx + dy * dy)
                ls += (log(ns * ns / (2.0 * math.pi * (1.0 + ns)))
                       - log(xi) - (1.0 + ns) * log1p(delta / xi))
        labels.append(label)
        scores.append(ls)
    scores.append(log(hyper.lambda0) + log_content_new)
    m = max(scores)
    exps = [exp(s - m) for s in scores]
    total = sum(exps)
    probs = [e / total for e in exps]
    log_q = m + log(total) - log(lam_t)
    return labels, probs, log_q


def incremental_weight(particle: Particle, post: GeoPost, log_q: float,
                       hyper: Hyperparams, t_prev: float,
                       config: EngineConfig | None = None,
                       system: ParticleSystem | None = None) -> float:
    """Log of the weight multiplier p(t_n | history) * Q_n.

    p(t_n | history) = lambda(t_n) * exp(-integral of lambda over
    [t_prev, t_n]), with the integral lambda0*(t_n - t_prev) plus each
    pattern's compensator increment.
    """
    if system is None:
        system = _adhoc_system(hyper, config)
        system.t_last = t_prev
    t = post.t
    lam_t = hyper.lambda0
    big_lambda = hyper.lambda0 * (t - t_prev)
    for stats in particle.patterns.values():
        alpha, tau, tau_idx = system._current_kernel(stats, t_prev)
        s_prev = stats.decay[tau_idx] * exp(-(t_prev - stats.t_ref) / tau)
        e_dt = exp(-(t - t_prev) / tau)
        lam_t += alpha * s_prev * e_dt
        big_lambda += alpha * tau * s_prev * (1.0 - e_dt)
    return log(lam_t) - big_lambda + log_q


def _adhoc_system(hyper: Hyperparams, config: EngineConfig | None) -> ParticleSystem:
    one = Hyperparams(**{**asdict(hyper), "n_particles": 1,
                         "psi_tau": hyper.psi_tau})
    return ParticleSystem(one, config or EngineConfig())


# ----------------------------------------------------------------------
# checkpoint serialization helpers

def _rng_state(rng: np.random.Generator) -> dict:
    return json.loads(json.dumps(rng.bit_generator.state))


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


_STATS_FIELDS = (
    "n_posts", "n_spatial", "total_words", "sum_x", "sum_y", "sum_r2",
    "mean_x", "mean_y", "m2", "t_ref", "alpha", "tau", "tau_idx",
)


def _stats_payload(stats: PatternStats) -> dict:
    out = {name: getattr(stats, name) for name in _STATS_FIELDS}
    out["word_counts"] = {str(k): v for k, v in stats.word_counts.items()}
    out["event_times"] = stats.event_times
    out["decay"] = stats.decay
    out["log_decay"] = ["-inf" if v == -math.inf else v for v in stats.log_decay]
    out["log_trigger"] = stats.log_trigger
    return out


def _stats_from_payload(payload: dict, n_taus: int, owner: object) -> PatternStats:
    stats = PatternStats(n_taus, payload["alpha"], payload["tau"],
                         payload["tau_idx"], owner=owner)
    for name in _STATS_FIELDS:
        setattr(stats, name, payload[name])
    stats.word_counts = {int(k): v for k, v in payload["word_counts"].items()}
    stats.event_times = list(payload["event_times"])
    stats.decay = list(payload["decay"])
    stats.log_decay = [-math.inf if v == "-inf" else v
                       for v in payload["log_decay"]]
    stats.log_trigger = list(payload["log_trigger"])
    return stats


def _particle_from_payload(payload: dict, n_taus: int) -> Particle:
    particle = Particle()
    particle.S = payload["S"]
    for label in payload["assignments"]:
        particle.record_assignment(label)
    for label, stats_d in payload["patterns"]:
        particle.patterns[int(label)] = _stats_from_payload(
            stats_d, n_taus, particle.token)
    for label, stats_d in payload["archive"]:
        particle.archive = (int(label),
                            _stats_from_payload(stats_d, n_taus, particle.token),
                            particle.archive)
    return particle
