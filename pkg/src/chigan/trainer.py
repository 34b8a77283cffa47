"""Adversarial training of the generator against one critic per study arm.

Each iteration every critic ascends its own bound on chi^2(P || Q_a),

    F_a = E_P[t] + E_{Q_a}[-t^2/4 - t],    t = gf_transform(V_a(x)),

and the generator descends ``sum_a E_P[t_a]`` (the exact objective gradient,
no saturating-loss substitute). Data is standardized by the pooled mean and
std of all arms, and every ``recenter_every`` iterations each critic's input
shift is reset to the mean of a fresh generator minibatch.
"""

from __future__ import annotations

import csv
import io
import logging
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ndcore as nd
from .cohort import StudyArm, check_same_schema, fmt
from .nets import (
    DEFAULT_HIDDEN,
    DEFAULT_NOISE_DIM,
    Discriminator,
    Generator,
    StandardizationStats,
    dumps_checkpoint,
    gf_transform,
    loads_checkpoint,
)

log = logging.getLogger(__name__)

# stream offsets for seed derivation
_GEN_INIT, _DISC_INIT, _GEN_Z, _ARM_Z, _ARM_DATA, _RECENTER, _EVAL = range(1, 8)


class TrainingError(RuntimeError):
    """Non-finite objective during training."""

    def __init__(self, iteration: int, message: str, trace: list | None = None):
        self.iteration = iteration
        self.trace = trace or []
        super().__init__(f"iteration {iteration}: {message}")


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_iters: int = 20000
    disc_steps: int = 1
    lr_gen: float = 1e-4
    lr_disc: float = 2e-4
    lr_decay: float = 0.95
    decay_every: int = 1000
    recenter_every: int = 500
    window: int = 500
    tol: float = 1e-4
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    noise_dim: int = DEFAULT_NOISE_DIM
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        for name in ("max_iters", "disc_steps", "decay_every", "recenter_every", "window", "noise_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr_gen", "lr_disc", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")

    def learning_rates(self, it: int) -> tuple[float, float]:
        f = self.lr_decay ** (it // self.decay_every)
        return self.lr_gen * f, self.lr_disc * f


def derive_seed(seed: int, offset: int, key: str | None = None) -> int:
    """Independent per-component seed; ``key`` ties a stream to an arm id."""
    entropy = [int(seed), offset]
    if key is not None:
        entropy.append(zlib.crc32(str(key).encode()))
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


class Adam:
    """Adam on a list of arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray], ascend: bool = False) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        sign = 1.0 if ascend else -1.0
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p += sign * self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EpochSampler:
    """Minibatches of row indices, without replacement within an epoch."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        if n < batch:
            raise ValueError(f"cannot draw batches of {batch} from {n} rows")
        self.n = n
        self.batch = batch
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.batch]
        self._pos += self.batch
        return idx


# --- objective pieces --------------------------------------------------------


def standardize(arms: Sequence[StudyArm]) -> tuple[list[StudyArm], StandardizationStats]:
    """Scale every arm by the mean/std of all arms pooled together."""
    if not arms:
        raise ValueError("no arms given")
    check_same_schema(arms)
    if any(a.n == 0 for a in arms):
        raise ValueError("every arm needs at least one row")
    pooled = np.concatenate([a.features for a in arms], axis=0)
    if pooled.shape[0] < 2:
        raise ValueError("need at least two pooled rows to standardize")
    stats = StandardizationStats(pooled.mean(axis=0), pooled.std(axis=0))
    return [a.with_features(stats.apply(a.features)) for a in arms], stats


def critic_objective(disc: Discriminator, bound, xg: nd.Tensor, xa: nd.Tensor) -> nd.Tensor:
    """Batch estimate of ``E_P[t] + E_Q[-t^2/4 - t]`` on the tape."""
    tg = gf_transform(disc.forward(xg, bound))
    ta = gf_transform(disc.forward(xa, bound))
    data_term = nd.add(nd.scale(nd.mean(nd.square(ta)), -0.25), nd.scale(nd.mean(ta), -1.0))
    return nd.add(nd.mean(tg), data_term)


def discriminator_loss(disc: Discriminator, x_gen: np.ndarray, x_data: np.ndarray) -> float:
    """Value the critic ascends, for a generated batch and a data batch."""
    tape = nd.Tape()
    bound = disc.bind(tape, trainable=False)
    out = critic_objective(disc, bound, tape.constant(x_gen), tape.constant(x_data))
    return float(out.value)


def _generator_objective(gen: Generator, gbound, discs: Sequence[Discriminator], z: nd.Tensor):
    tape = z.tape
    x = gen.forward(z, gbound)
    total = None
    for d in discs:
        m = nd.mean(gf_transform(d.forward(x, d.bind(tape, trainable=False))))
        total = m if total is None else nd.add(total, m)
    return total


def generator_loss(gen: Generator, discs: Sequence[Discriminator], z: np.ndarray) -> float:
    """``sum_a mean_m gf(V_a(G(z_m)))``; the generator descends this."""
    tape = nd.Tape()
    out = _generator_objective(gen, gen.bind(tape, trainable=False), discs, tape.constant(z))
    return float(out.value)


def critic_step(disc: Discriminator, opt: Adam, x_gen: np.ndarray, x_data: np.ndarray) -> float:
    tape = nd.Tape()
    bound = disc.bind(tape)
    out = critic_objective(disc, bound, tape.constant(x_gen), tape.constant(x_data))
    grads = nd.backward(tape, out)
    opt.step([grads[p] for p in bound], ascend=True)
    return float(out.value)


def generator_step(gen: Generator, opt: Adam, discs: Sequence[Discriminator], z: np.ndarray) -> float:
    tape = nd.Tape()
    bound = gen.bind(tape)
    out = _generator_objective(gen, bound, discs, tape.constant(z))
    grads = nd.backward(tape, out)
    opt.step([grads[p] for p in bound], ascend=False)
    return float(out.value)


# --- training --------------------------------------------------------------------


@dataclass
class TrainedModel:
    generator: Generator
    discriminators: list[Discriminator]
    stats: StandardizationStats
    arm_ids: list[str]
    config: TrainConfig | None = None
    trace: list[tuple] = field(default_factory=list)
    converged: bool = False

    def __post_init__(self):
        if len(self.discriminators) != len(self.arm_ids):
            raise ValueError("one discriminator per arm is required")

    @property
    def n_arms(self) -> int:
        return len(self.discriminators)

    def discriminator_for(self, arm: StudyArm | str | int) -> Discriminator:
        if isinstance(arm, int):
            return self.discriminators[arm]
        key = arm.arm_id if isinstance(arm, StudyArm) else str(arm)
        try:
            return self.discriminators[self.arm_ids.index(key)]
        except ValueError:
            raise KeyError(f"model has no arm {key!r}; arms are {self.arm_ids}") from None

    def dumps(self) -> str:
        return dumps_checkpoint(self.generator, self.discriminators, self.stats, self.arm_ids)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        gen, discs, stats, arm_ids = loads_checkpoint(Path(path).read_text(encoding="utf-8"))
        arm_ids = [a if a is not None else str(i) for i, a in enumerate(arm_ids)]
        return cls(gen, discs, stats, arm_ids)


def _moving_average_settled(totals: list[float], window: int, tol: float) -> bool:
    # compared only at window boundaries, over two disjoint windows
    if len(totals) < 2 * window or len(totals) % window:
        return False
    recent = np.mean(totals[-window:])
    before = np.mean(totals[-2 * window:-window])
    return abs(recent - before) < tol


def train(arms: Sequence[StudyArm], cfg: TrainConfig | None = None,
          callback: Callable[[int, TrainedModel], None] | None = None) -> TrainedModel:
    """Fit the generator and one critic per arm.

    Stops at ``cfg.max_iters`` or once the ``cfg.window`` moving average of
    the total objective moves by less than ``cfg.tol`` between consecutive
    windows.
    """
    cfg = cfg or TrainConfig()
    arms = list(arms)
    if len(arms) < 2:
        raise ValueError("training needs at least two arms")
    ids = [a.arm_id for a in arms]
    if len(set(ids)) != len(ids):
        raise ValueError(f"arm ids must be unique, got {ids}")
    for a in arms:
        if a.n < cfg.batch_size:
            raise ValueError(f"arm {a.arm_id} has {a.n} rows, fewer than the batch size {cfg.batch_size}")

    std_arms, stats = standardize(arms)
    d = arms[0].dim
    M = cfg.batch_size
    seed = cfg.seed

    gen = Generator.create(cfg.noise_dim, d, cfg.hidden, seed=derive_seed(seed, _GEN_INIT))
    discs = [Discriminator.create(d, cfg.hidden, seed=derive_seed(seed, _DISC_INIT, a)) for a in ids]
    gen_opt = Adam(gen.params, cfg.lr_gen, cfg.beta1, cfg.beta2)
    disc_opts = [Adam(dc.params, cfg.lr_disc, cfg.beta1, cfg.beta2) for dc in discs]

    gen_z_rng = np.random.default_rng(derive_seed(seed, _GEN_Z))
    recenter_rng = np.random.default_rng(derive_seed(seed, _RECENTER))
    arm_z_rngs = [np.random.default_rng(derive_seed(seed, _ARM_Z, a)) for a in ids]
    samplers = [EpochSampler(a.n, M, np.random.default_rng(derive_seed(seed, _ARM_DATA, a))) for a in std_arms]

    model = TrainedModel(gen, discs, stats, ids, cfg)
    totals: list[float] = []
    for it in range(cfg.max_iters):
        lr_g, lr_d = cfg.learning_rates(it)
        gen_opt.lr = lr_g
        for o in disc_opts:
            o.lr = lr_d

        if it % cfg.recenter_every == 0:
            center = gen.sample(M, recenter_rng).mean(axis=0)
            for dc in discs:
                dc.set_shift(center)

        comps = []
        try:
            for a, (arm, dc, opt) in enumerate(zip(std_arms, discs, disc_opts)):
                for _ in range(cfg.disc_steps):
                    xg = gen(arm_z_rngs[a].standard_normal((M, cfg.noise_dim)))
                    xa = arm.features[samplers[a].next()]
                    f_a = critic_step(dc, opt, xg, xa)
                comps.append(f_a)
            generator_step(gen, gen_opt, discs, gen_z_rng.standard_normal((M, cfg.noise_dim)))
        except nd.NonFiniteError as exc:
            raise TrainingError(it, f"non-finite objective ({exc})", model.trace) from exc

        total = float(np.sum(comps))
        if not np.isfinite(total):
            raise TrainingError(it, "non-finite objective", model.trace)
        totals.append(total)
        model.trace.append((it, *comps, total, lr_g, lr_d))
        if callback is not None:
            callback(it, model)
        if _moving_average_settled(totals, cfg.window, cfg.tol):
            model.converged = True
            log.info("converged at iteration %d", it)
            break
    return model


def write_trace_csv(path, model: TrainedModel) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", *[f"F_{a}" for a in model.arm_ids], "F_total", "lr_gen", "lr_disc"])
    for row in model.trace:
        w.writerow([row[0], *[fmt(v) for v in row[1:]]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def config_dict(cfg: TrainConfig) -> dict:
    out = asdict(cfg)
    out["hidden"] = list(cfg.hidden)
    return out


# --- objective estimation ------------------------------------------------------


@dataclass
class BoundEstimate:
    value: float
    stderr: float


def variational_bound(disc: Discriminator, x_p: np.ndarray, x_q: np.ndarray) -> BoundEstimate:
    """Monte Carlo ``E_P[t] - E_Q[t^2/4 + t]`` with its standard error."""
    tp = gf_transform(disc.raw(x_p))
    tq = gf_transform(disc.raw(x_q))
    conj = 0.25 * tq * tq + tq
    value = tp.mean() - conj.mean()
    se = np.sqrt(tp.var(ddof=1) / tp.size + conj.var(ddof=1) / conj.size)
    return BoundEstimate(float(value), float(se))


@dataclass
class ObjectiveEstimate:
    components: list[float]
    stderrs: list[float]
    total: float


def objective_estimate(model: TrainedModel, arms: Sequence[StudyArm], n_mc: int = 10000,
                       seed: int = 0, standardized: bool = False) -> ObjectiveEstimate:
    """Per-arm lower bounds on chi^2(P || Q_a) using fresh generator draws and the full arm data."""
    rng = np.random.default_rng(derive_seed(seed, _EVAL))
    comps, ses = [], []
    for arm in arms:
        x_q = arm.features if standardized else model.stats.apply(arm.features)
        x_p = model.generator.sample(n_mc, rng)
        est = variational_bound(model.discriminator_for(arm), x_p, x_q)
        comps.append(est.value)
        ses.append(est.stderr)
    return ObjectiveEstimate(comps, ses, float(np.sum(comps)))


def fit_critic(sample_p: Callable[[np.random.Generator, int], np.ndarray], data_q: np.ndarray,
               cfg: TrainConfig | None = None, disc: Discriminator | None = None) -> tuple[Discriminator, list[float]]:
    """Ascend one critic against a frozen sampler for P; returns (critic, per-step objective)."""
    cfg = cfg or TrainConfig()
    data_q = np.asarray(data_q, dtype=np.float64)
    if data_q.ndim == 1:
        data_q = data_q[:, None]
    d = data_q.shape[1]
    disc = disc or Discriminator.create(d, cfg.hidden, seed=derive_seed(cfg.seed, _DISC_INIT, "q"))
    opt = Adam(disc.params, cfg.lr_disc, cfg.beta1, cfg.beta2)
    p_rng = np.random.default_rng(derive_seed(cfg.seed, _ARM_Z, "q"))
    sampler = EpochSampler(data_q.shape[0], cfg.batch_size,
                           np.random.default_rng(derive_seed(cfg.seed, _ARM_DATA, "q")))
    trace = []
    for it in range(cfg.max_iters):
        opt.lr = cfg.learning_rates(it)[1]
        xg = np.asarray(sample_p(p_rng, cfg.batch_size), dtype=np.float64).reshape(cfg.batch_size, d)
        try:
            trace.append(critic_step(disc, opt, xg, data_q[sampler.next()]))
        except nd.NonFiniteError as exc:
            raise TrainingError(it, f"non-finite objective ({exc})", trace) from exc
    return disc, trace
