"""Reproducible experiment runner: estimator comparisons and learning curves.

Configurations are flat key=value text files (``#`` comments allowed); every
run/consumer pair draws from an independently derived random stream (see
:mod:`bpglab.rng`), so outputs are byte-identical for a given config + seed
regardless of scheduling.  Results are CSV with a ``# schema=1`` header line.

CSV columns
    grad-compare: estimator,M,rep,mse,angular_error_deg  (summary rows carry
    rep = "mean" / "stderr")
    optimize:     algo,run,update,metric_name,metric_value
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from bpglab import oracles
from bpglab.bac import BacKernelSpec, bac_gradient, bac_optimize, estimate_step_fisher
from bpglab.bpg import bpg_eval_from_paths, bpg_eval_sparse_from_paths, bpg_optimize
from bpglab.envs import Env, MountainCar, make_env
from bpglab.errors import ContractViolation
from bpglab.fisher import FisherInfo, fisher_analytic, fisher_traj_mc
from bpglab.gptd import gptd_fit_sparse
from bpglab.mcpg import mc_gradient_from_paths, mcpg_optimize
from bpglab.optimize import Schedule
from bpglab.policies import PolicyFamily, make_policy
from bpglab.rng import derive_rng
from bpglab.rollout import rollout_episodes, rollout_paths, stats_from_episodes

SCHEMA_LINE = "# schema=1"
_FROM_CONFIG = "__from_config__"  # sentinel: write to cfg.out; None skips writing
GRAD_COLUMNS = ["estimator", "M", "rep", "mse", "angular_error_deg"]
OPT_COLUMNS = ["algo", "run", "update", "metric_name", "metric_value"]

ESTIMATOR_TAGS = ("mc", "bq1", "bq2", "bq1-sparse", "bq2-sparse", "bac")

# stream components within one run (stable; new consumers must append)
COMP_INIT, COMP_PATHS, COMP_FISHER, COMP_EVAL = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    experiment: str  # grad-compare | optimize
    env: str
    family: str
    estimators: list[str] = field(default_factory=lambda: ["mc"])
    M: list[int] = field(default_factory=lambda: [10])
    reps: int = 1
    updates: int = 0
    runs: int = 1
    beta0: dict[str, list[float]] = field(default_factory=dict)
    beta_c: float = math.inf
    beta_c_algo: dict[str, float] = field(default_factory=dict)
    schedule: str = "constant"
    tau: float = 1e-2
    sigma_r: float = 0.0
    gamma: Optional[float] = None
    fisher: str = "mc"
    fisher_setup_paths: int = 10**5
    sigma2: float = 1.0
    kernel_sigma_k: float = 1.0
    kernel_fisher_weight: float = 1.0
    natural: bool = False
    variant: str = "plain"
    direction: str = "auto"  # min | max | auto (per-env default)
    theta: Optional[list[float]] = None
    eval_every: Optional[int] = None
    eval_episodes: Optional[int] = None
    train_step_cap: Optional[int] = None
    seed: int = 1
    experiment_id: str = ""
    out: str = "results.csv"

    def resolved_id(self) -> str:
        return self.experiment_id or f"{self.experiment}:{self.env}:{self.family}"


_FIELD_PARSERS: dict[str, Callable[[str], object]] = {
    "experiment": str,
    "env": str,
    "family": str,
    "estimators": lambda s: [x.strip() for x in s.split(",") if x.strip()],
    "M": lambda s: [int(x) for x in s.split(",")],
    "reps": int,
    "updates": int,
    "runs": int,
    "beta_c": float,
    "schedule": str,
    "tau": float,
    "sigma_r": float,
    "gamma": float,
    "fisher": str,
    "fisher_setup_paths": int,
    "sigma2": float,
    "kernel_sigma_k": float,
    "kernel_fisher_weight": float,
    "natural": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "variant": str,
    "direction": str,
    "theta": lambda s: [float(x) for x in s.split(",")],
    "eval_every": int,
    "eval_episodes": int,
    "train_step_cap": int,
    "seed": int,
    "experiment_id": str,
    "out": str,
}


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment="", env="", family="")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("beta0."):
            algo = key.split(".", 1)[1]
            try:
                cfg.beta0[algo] = [float(x) for x in value.split(",")]
            except ValueError:
                raise ContractViolation(f"config field {key!r}: could not parse rates {value!r}") from None
            continue
        if key == "beta0":
            cfg.beta0["*"] = [float(x) for x in value.split(",")]
            continue
        if key.startswith("beta_c."):
            algo = key.split(".", 1)[1]
            try:
                cfg.beta_c_algo[algo] = float(value) if value.strip() != "inf" else math.inf
            except ValueError:
                raise ContractViolation(f"config field {key!r}: bad value {value!r}") from None
            continue
        parser = _FIELD_PARSERS.get(key)
        if parser is None:
            raise ContractViolation(f"unknown config field {key!r} (line {lineno})")
        try:
            setattr(cfg, key, parser(value))
        except (TypeError, ValueError):
            raise ContractViolation(f"config field {key!r}: bad value {value!r}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in ("grad-compare", "optimize"):
        raise ContractViolation(f"config field 'experiment': unknown kind {cfg.experiment!r}")
    from bpglab.envs import env_names
    from bpglab.policies import policy_names

    if cfg.env not in env_names():
        raise ContractViolation(f"config field 'env': unknown environment {cfg.env!r}")
    if cfg.family not in policy_names():
        raise ContractViolation(f"config field 'family': unknown family {cfg.family!r}")
    for tag in cfg.estimators:
        if tag not in ESTIMATOR_TAGS:
            raise ContractViolation(f"config field 'estimators': unknown tag {tag!r}")
    if cfg.reps < 1 or cfg.runs < 1:
        raise ContractViolation("config fields 'reps'/'runs' must be >= 1")
    if any(m < 1 for m in cfg.M):
        raise ContractViolation("config field 'M': sample sizes must be >= 1")
    if cfg.direction not in ("auto", "min", "max"):
        raise ContractViolation("config field 'direction': use auto, min, or max")


ENV_DIRECTION = {"bandit-linear": 1.0, "bandit-quadratic": 1.0, "lqr": -1.0,
                 "randomwalk": -1.0, "mountaincar": 1.0, "ship": 1.0}
ENV_EVAL_EVERY = {"lqr": 1, "randomwalk": 100, "mountaincar": 50, "ship": 100,
                  "bandit-linear": 1, "bandit-quadratic": 1}


def _direction(cfg: ExperimentConfig) -> float:
    if cfg.direction == "min":
        return -1.0
    if cfg.direction == "max":
        return 1.0
    return ENV_DIRECTION.get(cfg.env, 1.0)


def _gamma(cfg: ExperimentConfig, env: Env) -> float:
    return env.default_gamma if cfg.gamma is None else cfg.gamma


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path_or_buf, columns: list[str], rows: list[tuple]) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    text = buf.getvalue()
    if path_or_buf is not None:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# gradient comparison

def _true_gradient(cfg: ExperimentConfig, env: Env, family: PolicyFamily, theta: np.ndarray,
                   gamma: float) -> np.ndarray:
    if cfg.env.startswith("bandit"):
        kind = "linear" if cfg.env.endswith("linear") else "quadratic"
        return oracles.exact_gradient_bandit(kind, theta)
    if cfg.env == "lqr" and cfg.family == "lqr-gauss-raw":
        fixture = oracles.load_lqr_gradient_fixture()
        if np.allclose(theta, oracles.FIXTURE_POINT, atol=1e-12):
            return fixture.value
        return oracles.lqr_exact_grad(theta[0], theta[1])
    if cfg.env == "lqr" and cfg.family == "lqr-gauss":
        return oracles.lqr_exact_grad_kappa(theta)
    if cfg.env == "randomwalk":
        mdp = oracles.walk_mdp(family.dim)
        return oracles.exact_discrete(mdp, family, theta, gamma).grad
    raise ContractViolation(f"no exact-gradient oracle for env {cfg.env!r}")


def _setup_fisher(cfg: ExperimentConfig, env: Env, family: PolicyFamily, theta: np.ndarray,
                  gamma: float) -> FisherInfo:
    """Shared 'known G' for the comparison experiments (one high-sample estimate)."""
    if cfg.fisher == "analytic":
        return fisher_analytic(family, theta)
    rng = derive_rng(cfg.seed, cfg.resolved_id() + ":fisher-setup")
    stats = rollout_paths(env, family, theta, cfg.fisher_setup_paths, rng, gamma=gamma)
    return fisher_traj_mc(stats.scores)


def run_grad_compare(cfg: ExperimentConfig, out_path: Optional[str] = _FROM_CONFIG) -> str:
    """One row per (estimator, M, repetition); estimators share each sample."""
    validate_config(cfg)
    env = make_env(cfg.env)
    family = _make_family(cfg)
    gamma = _gamma(cfg, env)
    theta = np.asarray(cfg.theta if cfg.theta is not None else family.init_theta(), dtype=float)
    g_true = _true_gradient(cfg, env, family, theta, gamma)
    exp_id = cfg.resolved_id()

    needs_g = any(t != "mc" for t in cfg.estimators)
    shared_g = _setup_fisher(cfg, env, family, theta, gamma) if needs_g else None
    kernel_spec = BacKernelSpec(cfg.kernel_sigma_k, cfg.kernel_fisher_weight,
                                _state_map(cfg.env))

    rows = []
    horizon = env.horizon
    for m in cfg.M:
        errors: dict[str, list[tuple[float, float]]] = {t: [] for t in cfg.estimators}
        for rep in range(cfg.reps):
            rng_paths = derive_rng(cfg.seed, exp_id, rep, COMP_PATHS)
            episodes = rollout_episodes(env, family, theta, m, rng_paths)
            stats = stats_from_episodes(episodes, family, theta, gamma)
            for tag in cfg.estimators:
                if tag == "mc":
                    est = mc_gradient_from_paths(stats)
                elif tag.startswith("bq"):
                    if tag.endswith("-sparse"):
                        est = bpg_eval_sparse_from_paths(
                            stats, shared_g, tag.removesuffix("-sparse"), cfg.sigma_r,
                            T=horizon, tau=cfg.tau)
                    else:
                        est = bpg_eval_from_paths(stats, shared_g, tag, cfg.sigma_r, T=horizon)
                elif tag == "bac":
                    rng_f = derive_rng(cfg.seed, exp_id, rep, COMP_FISHER)
                    info = estimate_step_fisher(cfg.fisher if cfg.fisher != "mc" else "g-est",
                                                env, family, theta, m, gamma, rng_f, episodes)
                    kernel = kernel_spec.build(family, theta, info)
                    critic = gptd_fit_sparse(episodes, kernel, cfg.sigma2, gamma, cfg.tau)
                    est = bac_gradient(critic, with_cov=False)
                else:  # pragma: no cover - validated earlier
                    raise ContractViolation(tag)
                e_mse = oracles.mse(est.mean, g_true)
                e_ang = oracles.angular_error_deg(est.mean, g_true)
                errors[tag].append((e_mse, e_ang))
                rows.append((tag, m, rep, float(e_mse), float(e_ang)))
        for tag in cfg.estimators:
            arr = np.asarray(errors[tag])
            mean = arr.mean(axis=0)
            stderr = arr.std(axis=0, ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else np.zeros(2)
            rows.append((tag, m, "mean", float(mean[0]), float(mean[1])))
            rows.append((tag, m, "stderr", float(stderr[0]), float(stderr[1])))
    target = cfg.out if out_path is _FROM_CONFIG else out_path
    return write_csv(target, GRAD_COLUMNS, rows)


def _make_family(cfg: ExperimentConfig) -> PolicyFamily:
    if cfg.family == "walk-logistic":
        n = 10 if cfg.env == "randomwalk" else 10
        return make_policy("walk-logistic", n_states=n)
    return make_policy(cfg.family)


def _state_map(env_name: str):
    if env_name == "mountaincar":
        return MountainCar.to_unit_square
    return None


# ---------------------------------------------------------------------------
# policy optimization

def _init_theta(cfg: ExperimentConfig, family: PolicyFamily, rng: np.random.Generator) -> np.ndarray:
    if cfg.theta is not None:
        return np.asarray(cfg.theta, dtype=float)
    if cfg.family == "lqr-gauss":
        return rng.uniform(-2.0, 2.0, size=2)  # fresh random squashed parameters per run
    if cfg.family == "gauss-meanstd":
        return family.init_theta()
    return np.zeros(family.dim)


def _metric(cfg: ExperimentConfig, env: Env, family: PolicyFamily, gamma: float,
            eval_rng: np.random.Generator):
    """(metric_name, eval_fn) for the learning curve of this environment."""
    if cfg.env == "lqr":
        if cfg.family == "lqr-gauss":
            return "exact_return", lambda th: oracles.lqr_exact_return_kappa(th)
        return "exact_return", lambda th: oracles.lqr_exact_return(th[0], th[1])
    if cfg.env.startswith("bandit"):
        kind = "linear" if cfg.env.endswith("linear") else "quadratic"
        return "exact_return", lambda th: oracles.exact_return_bandit(kind, th)
    if cfg.env == "randomwalk":
        mdp = oracles.walk_mdp(family.dim)
        eta_star = oracles.walk_eta_star(gamma, family.dim)

        def gap(th):
            return oracles.exact_discrete(mdp, family, th, gamma).eta - eta_star

        return "eta_gap", gap
    if cfg.env == "mountaincar":
        n_eval = cfg.eval_episodes or 1000

        def steps(th):
            ps = rollout_paths(env, family, th, n_eval, eval_rng, gamma=1.0, max_steps=200)
            return float(ps.lengths.mean())

        return "eval_steps", steps
    if cfg.env == "ship":
        n_eval = cfg.eval_episodes or 100

        def success(th):
            ps = rollout_paths(env, family, th, n_eval, eval_rng)
            return float(ps.success.mean())

        return "success_ratio", success
    raise ContractViolation(f"no optimization metric for env {cfg.env!r}")


def _schedule(cfg: ExperimentConfig, algo: str) -> Schedule:
    rates = cfg.beta0.get(algo) or cfg.beta0.get("*")
    if rates is None:
        raise ContractViolation(f"config: no learning rate for algo {algo!r} (beta0.{algo} = ...)")
    beta0 = np.asarray(rates[0] if len(rates) == 1 else rates, dtype=float)
    det_scale = cfg.variant == "natural" and algo.startswith("bq")
    beta_c = cfg.beta_c_algo.get(algo, cfg.beta_c)
    return Schedule(beta0, cfg.schedule, beta_c, det_scale=det_scale)


def run_optimize(cfg: ExperimentConfig, out_path: Optional[str] = _FROM_CONFIG) -> str:
    """Learning curves, one row per (algo, run, evaluated update)."""
    validate_config(cfg)
    env = make_env(cfg.env)
    family = _make_family(cfg)
    gamma = _gamma(cfg, env)
    direction = _direction(cfg)
    eval_every = cfg.eval_every or ENV_EVAL_EVERY.get(cfg.env, 1)
    exp_id = cfg.resolved_id()
    kernel_spec = BacKernelSpec(cfg.kernel_sigma_k, cfg.kernel_fisher_weight, _state_map(cfg.env))
    m = cfg.M[0]

    rows = []
    for run in range(cfg.runs):
        init_rng = derive_rng(cfg.seed, exp_id, run, COMP_INIT)
        theta0 = _init_theta(cfg, family, init_rng)
        for algo_idx, algo in enumerate(cfg.estimators):
            # distinct component offsets per algorithm keep the streams independent
            base_comp = 10 * (algo_idx + 1)
            rng = derive_rng(cfg.seed, exp_id, run, base_comp + COMP_PATHS)
            eval_rng = derive_rng(cfg.seed, exp_id, run, base_comp + COMP_EVAL)
            name, eval_fn = _metric(cfg, env, family, gamma, eval_rng)
            schedule = _schedule(cfg, algo)
            if algo == "mc":
                result = mcpg_optimize(env, family, theta0, cfg.updates, m, schedule, rng,
                                       gamma=gamma, direction=direction,
                                       max_steps=cfg.train_step_cap,
                                       eval_fn=eval_fn, eval_every=eval_every)
            elif algo.startswith("bq"):
                result = bpg_optimize(env, family, theta0, cfg.updates, m, schedule, rng,
                                      model=algo, variant=cfg.variant, fisher=cfg.fisher,
                                      sigma_r=cfg.sigma_r, gamma=gamma,
                                      tau=cfg.tau if algo.endswith("-sparse") else None,
                                      max_steps=cfg.train_step_cap,
                                      direction=direction, eval_fn=eval_fn,
                                      eval_every=eval_every)
            elif algo == "bac":
                result = bac_optimize(env, family, theta0, cfg.updates, m, schedule, rng,
                                      kernel_spec, sigma2=cfg.sigma2, tau=cfg.tau,
                                      gamma=gamma, fisher=cfg.fisher, natural=cfg.natural,
                                      max_steps=cfg.train_step_cap,
                                      direction=direction, eval_fn=eval_fn,
                                      eval_every=eval_every)
            else:
                raise ContractViolation(f"algo {algo!r} is not an optimizer tag")
            for update, value in result.curve:
                rows.append((algo, run, update, name, float(value)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    target = cfg.out if out_path is _FROM_CONFIG else out_path
    return write_csv(target, OPT_COLUMNS, rows)
