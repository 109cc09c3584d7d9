"""Experiment presets encoding the benchmark setups and their learning rates.

Each preset is a canonical config text (``bpg-lab config show`` prints it);
desk-scale repetition counts keep runtimes sane, and ``--paper-scale``
applies the override lines restoring the full-scale counts.
"""

from __future__ import annotations

from dataclasses import dataclass

from bpglab.harness import ExperimentConfig, parse_config


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    text: str
    paper_scale: str = ""  # extra lines applied under --paper-scale

    def config(self, paper_scale: bool = False) -> ExperimentConfig:
        text = self.text + ("\n" + self.paper_scale if paper_scale and self.paper_scale else "")
        return parse_config(text)


_PRESETS = [
    Preset(
        "bandit-grad",
        "gradient accuracy on the linear-reward bandit (MC vs BQ, M = 10 and 100)",
        """
experiment = grad-compare
env = bandit-linear
family = gauss-meanstd
theta = 0, 1
estimators = mc, bq1
M = 10, 100
reps = 1000
fisher = analytic
out = bandit_grad.csv
""",
        "reps = 10000",
    ),
    Preset(
        "bandit-grad-quadratic",
        "gradient accuracy on the squared-reward bandit",
        """
experiment = grad-compare
env = bandit-quadratic
family = gauss-meanstd
theta = 0, 1
estimators = mc, bq1
M = 10, 100
reps = 1000
fisher = analytic
out = bandit_grad_quadratic.csv
""",
        "reps = 10000",
    ),
    Preset(
        "lqr-grad",
        "LQR gradient accuracy at (lambda, sigma) = (-0.2, 1): MC vs both BQ models",
        """
experiment = grad-compare
env = lqr
family = lqr-gauss-raw
theta = -0.2, 1.0
estimators = mc, bq1, bq1-sparse, bq2, bq2-sparse
M = 20, 40, 80
reps = 1000
fisher = mc
fisher_setup_paths = 100000
tau = 0.01
out = lqr_grad.csv
""",
        "reps = 10000\nM = 5, 10, 20, 40, 60, 80, 100",
    ),
    Preset(
        "lqr-grad-noisy",
        "LQR gradient accuracy with reward noise sigma_r = 1",
        """
experiment = grad-compare
env = lqr
family = lqr-gauss-raw
theta = -0.2, 1.0
estimators = mc, bq1, bq2
M = 20, 40, 80
reps = 1000
sigma_r = 1.0
fisher = mc
out = lqr_grad_noisy.csv
""",
        "reps = 10000",
    ),
    Preset(
        "lqr-learn-m20",
        "LQR policy optimization, M = 20 paths per update: BPG (quadratic kernel) vs MCPG",
        """
experiment = optimize
env = lqr
family = lqr-gauss
estimators = bq1-sparse, mc
M = 20
updates = 100
runs = 1000
schedule = horizon20
beta0.bq1-sparse = 0.15, 0.15
beta0.mc = 0.05, 0.10
tau = 0.01
fisher = mc
direction = min
out = lqr_learn_m20.csv
""",
        "runs = 10000",
    ),
    Preset(
        "lqr-learn-bpng-m20",
        "LQR optimization with the natural BPG update (rate scaled by det G)",
        """
experiment = optimize
env = lqr
family = lqr-gauss
estimators = bq1-sparse, mc
M = 20
updates = 100
runs = 1000
schedule = constant
variant = natural
beta0.bq1-sparse = 0.015, 0.005
beta0.mc = 0.05, 0.10
tau = 0.01
fisher = mc
direction = min
out = lqr_learn_bpng_m20.csv
""",
        "runs = 10000",
    ),
    Preset(
        "lqr-learn-var-m20",
        "LQR optimization with covariance-scaled BPG steps",
        """
experiment = optimize
env = lqr
family = lqr-gauss
estimators = bq1-sparse, mc
M = 20
updates = 100
runs = 1000
schedule = horizon20
variant = var
beta0.bq1-sparse = 0.10, 0.15
beta0.mc = 0.05, 0.10
tau = 0.01
fisher = mc
direction = min
out = lqr_learn_var_m20.csv
""",
        "runs = 10000",
    ),
    Preset(
        "lqr-learn-ml-m20",
        "LQR optimization with the model-based (maximum-likelihood) Fisher estimate",
        """
experiment = optimize
env = lqr
family = lqr-gauss
estimators = bq1-sparse, mc
M = 20
updates = 100
runs = 100
schedule = horizon20
beta0.bq1-sparse = 0.15, 0.15
beta0.mc = 0.05, 0.10
tau = 0.01
fisher = ml
direction = min
out = lqr_learn_ml_m20.csv
""",
        "runs = 10000",
    ),
    Preset(
        "walk-grad-m50",
        "random-walk gradient accuracy at theta_x = log(41/9): MC vs BQ vs BAC",
        """
experiment = grad-compare
env = randomwalk
family = walk-logistic
theta = 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884, 1.5163474893680884
estimators = mc, bq1, bac
M = 50
reps = 100
gamma = 0.99
fisher = g-est
kernel_sigma_k = 3.0
kernel_fisher_weight = 0.01
sigma2 = 1.0
tau = 0.001
out = walk_grad_m50.csv
""",
        "reps = 1000\nM = 5, 25, 50, 75, 100",
    ),
    Preset(
        "walk-learn-m25",
        "random-walk optimization, M = 25 episodes per update: BAC vs MCPG",
        """
experiment = optimize
env = randomwalk
family = walk-logistic
estimators = bac, mc
M = 25
updates = 500
runs = 100
gamma = 0.99
schedule = constant
beta0.bac = 5.0
beta0.mc = 0.075
fisher = state-action-avg
kernel_sigma_k = 3.0
kernel_fisher_weight = 0.01
sigma2 = 200.0
tau = 0.001
train_step_cap = 600
direction = min
eval_every = 100
out = walk_learn_m25.csv
""",
        "runs = 1000",
    ),
    Preset(
        "mountaincar-learn-m10",
        "mountain-car optimization, M = 10 episodes per update: BAC vs MCPG",
        """
experiment = optimize
env = mountaincar
family = mc-softmax-rbf
estimators = bac, mc
M = 10
updates = 500
runs = 20
gamma = 0.99
schedule = search-converge
beta0.bac = 0.05
beta_c.bac = inf
beta0.mc = 0.1
beta_c.mc = 100
fisher = g-est
kernel_sigma_k = 0.325
kernel_fisher_weight = 1.0
sigma2 = 20.0
tau = 0.02
direction = max
eval_every = 50
out = mountaincar_learn_m10.csv
""",
        "runs = 100",
    ),
    Preset(
        "ship-learn-m20",
        "ship-steering optimization, M = 20 episodes per update: BAC vs MCPG",
        """
experiment = optimize
env = ship
family = ship-cmac-gauss
estimators = bac, mc
M = 20
updates = 200
runs = 3
gamma = 1.0
schedule = constant
beta0.bac = 0.5
beta0.mc = 0.01
fisher = state-action-avg
kernel_sigma_k = 1.0
kernel_fisher_weight = 1.0
sigma2 = 1.0
tau = 1.0
direction = max
eval_every = 100
out = ship_learn_m20.csv
""",
        "runs = 100\nupdates = 1000",
    ),
]

PRESETS = {p.name: p for p in _PRESETS}


def preset_names() -> list[str]:
    return [p.name for p in _PRESETS]


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {preset_names()}")
    return PRESETS[name]
