"""Training loop and dimension estimation for the gated autoencoder.

The estimate works by starting the bottleneck wider than necessary and
letting the L1 pull on the weakest gate weight eliminate coordinates
one at a time; reconstruction pressure defends the coordinates that
carry real structure. The effective dimension (number of positive gate
weights) is therefore non-increasing over training and its final value
is the estimate d~.

After every epoch the held-out reconstruction loss is evaluated twice,
once as-is and once with the weakest active coordinate zeroed, and the
best snapshot per effective dimension is kept. That yields comparable
losses at d~-1, d~ and d~+1, which is the evidence the estimate rests
on: the loss should collapse between d~-1 and d~ and barely improve
from d~ to d~+1.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from idea import objective
from idea.engine import ContractError, backward_grad
from idea.model import IdeaModel
from idea.objective import LossBreakdown, param_leaves, projected_test_loss, test_loss, total_loss
from idea.rng import stream

REPORT_FORMAT = "idea-estimate-report"
REPORT_SCHEMA_VERSION = 1

HISTORY_COLUMNS = ("epoch", "reconstruction", "projected", "regularization",
                   "orthogonality", "h_term", "total", "test_loss",
                   "projected_test_loss", "l_eff", "lr_factor")


class TrainingAbort(RuntimeError):
    """Raised when training cannot continue; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class TrainConfig:
    """Hyperparameters; defaults are the tuned values for all benchmarks."""

    l_init: int
    epochs: int = 1000
    batch_size: int = 256
    lr: float = 1e-4
    lr_co1: float = 2e-4
    lambda_rec: float = 1.0
    lambda_reg: float = 1e-3
    lambda_orth: float = 1e-3
    alpha: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    scheduler_step: int = 400
    scheduler_gamma: float = 0.5
    test_fraction: float = 0.2
    seed: int = 0
    swe: bool = False

    def validate(self):
        checks = [
            (self.l_init >= 1, f"l_init must be >= 1, got {self.l_init}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (self.batch_size >= 2, f"batch_size must be >= 2, got {self.batch_size}"),
            (self.lr > 0 and self.lr_co1 > 0, "learning rates must be positive"),
            (self.lambda_rec >= 0 and self.lambda_reg >= 0 and self.lambda_orth >= 0,
             "loss weights must be non-negative"),
            (self.alpha > 0, f"alpha must be positive, got {self.alpha}"),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1,
             "adam betas must lie in [0, 1)"),
            (self.adam_eps > 0, "adam_eps must be positive"),
            (self.scheduler_step >= 1, "scheduler_step must be >= 1"),
            (0 < self.scheduler_gamma <= 1, "scheduler_gamma must lie in (0, 1]"),
            (0 < self.test_fraction < 1,
             f"test_fraction must lie in (0, 1), got {self.test_fraction}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ContractError(msg)
        return self


# ------------------------------------------------------------------ adam

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m={k: np.zeros_like(v) for k, v in params.items()},
                   v={k: np.zeros_like(v) for k, v in params.items()})


def adam_step(state, params, grads, lr_map, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update, in place; `lr_map` gives the rate per parameter."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr_map[name] * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ----------------------------------------------------------------- split

def _split_indices(n, fraction, seed):
    n_test = int(round(n * fraction))
    if n_test < 1 or n - n_test < 2:
        raise ContractError(
            f"cannot split {n} rows with test_fraction={fraction}: "
            f"need >= 2 train and >= 1 test rows")
    perm = stream(seed, "split").permutation(n)
    return perm[n_test:], perm[:n_test]


def split_train_test(x, fraction, seed):
    """Deterministic shuffled split; returns (train, test) row matrices."""
    x = np.asarray(x, dtype=np.float64)
    tr, te = _split_indices(x.shape[0], fraction, seed)
    return x[tr], x[te]


# ------------------------------------------------------------- reporting

@dataclass
class BestState:
    """Best snapshot seen at one effective dimension."""

    model: IdeaModel
    test_loss: float
    epoch: int


@dataclass
class EstimateReport:
    d_tilde: int
    losses: dict
    loss_history: list
    l_eff_history: list
    wall_time_s: float | None
    config: TrainConfig

    def summary(self) -> str:
        lines = [f"estimated dimension d~ = {self.d_tilde}"]
        for k in (self.d_tilde - 1, self.d_tilde, self.d_tilde + 1):
            if k in self.losses:
                lines.append(f"  held-out loss at {k}: {self.losses[k]:.6g}")
        if self.wall_time_s is not None:
            lines.append(f"  wall time: {self.wall_time_s:.1f}s")
        return "\n".join(lines)

    def to_json(self, include_wall_time=True) -> str:
        payload = {
            "format": REPORT_FORMAT,
            "schema_version": REPORT_SCHEMA_VERSION,
            "d_tilde": self.d_tilde,
            "losses": {str(k): v for k, v in sorted(self.losses.items())},
            "loss_history": self.loss_history,
            "l_eff_history": self.l_eff_history,
            # volatile: excluded by default writers that promise replayable hashes
            "wall_time_s": self.wall_time_s if include_wall_time else None,
            "config": asdict(self.config),
        }
        return json.dumps(payload, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "EstimateReport":
        payload = json.loads(text)
        if payload.get("format") != REPORT_FORMAT:
            raise ContractError(f"not an estimate report: format={payload.get('format')!r}")
        if payload.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ContractError(
                f"unsupported report schema_version={payload.get('schema_version')!r}")
        return cls(
            d_tilde=payload["d_tilde"],
            losses={int(k): v for k, v in payload["losses"].items()},
            loss_history=payload["loss_history"],
            l_eff_history=payload["l_eff_history"],
            wall_time_s=payload["wall_time_s"],
            config=TrainConfig(**payload["config"]),
        )


def write_loss_history_csv(report, path):
    """Loss history as RFC-4180 CSV, one row per epoch, 17 significant digits."""
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return format(float(v), ".17g")

    lines = [",".join(HISTORY_COLUMNS)]
    for row in report.loss_history:
        lines.append(",".join(fmt(row.get(c)) for c in HISTORY_COLUMNS))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")


# ---------------------------------------------------------------- training

def _mean_breakdown(parts):
    n = len(parts)
    h_vals = [p.h_term for p in parts if p.h_term is not None]
    return LossBreakdown(
        reconstruction=sum(p.reconstruction for p in parts) / n,
        projected=sum(p.projected for p in parts) / n,
        regularization=sum(p.regularization for p in parts) / n,
        orthogonality=sum(p.orthogonality for p in parts) / n,
        h_term=(sum(h_vals) / len(h_vals)) if h_vals else None,
        total=sum(p.total for p in parts) / n,
    )


def run_training(x, config, h_column=None, progress=None):
    """Train one model; returns (best-states-by-dimension, EstimateReport).

    `h_column`, when given (flow mode), is matched against the first
    gated coordinate and must align row-for-row with `x`. `progress`,
    when given, is called as progress(epoch, epoch_row_dict) after each
    epoch. Batches with fewer than 2 rows are dropped (correlation of a
    single row is undefined).

    Raises TrainingAbort when the loss stops being finite or every gate
    weight has been eliminated.
    """
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"training data must be 2-d, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError("training data contains non-finite values")
    if config.swe and h_column is None:
        raise ContractError("swe mode requires an h column")
    if h_column is not None:
        h_column = np.asarray(h_column, dtype=np.float64).reshape(-1)
        if h_column.shape[0] != x.shape[0]:
            raise ContractError(
                f"h column has {h_column.shape[0]} rows, data has {x.shape[0]}")

    t_start = time.perf_counter()
    n, p = x.shape
    train_idx, test_idx = _split_indices(n, config.test_fraction, config.seed)
    x_train, x_test = x[train_idx], x[test_idx]
    h_train = h_column[train_idx] if h_column is not None else None

    model = IdeaModel.initialize(p, config.l_init, stream(config.seed, "init"))
    opt = AdamState.for_params(model.params)
    shuffle_rng = stream(config.seed, "shuffle")

    best: dict[int, BestState] = {}
    history = []
    l_eff_history = []
    prev_l_eff = config.l_init

    for epoch in range(1, config.epochs + 1):
        factor = config.scheduler_gamma ** ((epoch - 1) // config.scheduler_step)
        lr_map = {name: (config.lr_co1 if name == "w_co1" else config.lr) * factor
                  for name in model.params}

        perm = shuffle_rng.permutation(x_train.shape[0])
        parts = []
        for lo in range(0, perm.size, config.batch_size):
            rows = perm[lo:lo + config.batch_size]
            if rows.size < 2:
                continue
            xb = x_train[rows]
            hb = h_train[rows] if h_train is not None else None
            breakdown, root = total_loss(model, xb, config, h=hb)
            if not np.isfinite(breakdown.total):
                raise TrainingAbort(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics={"epoch": epoch, "batch_start": int(lo),
                                 "breakdown": breakdown.to_dict()})
            backward_grad(root)
            grads = {name: (leaf.adjoint if leaf.adjoint is not None
                            else np.zeros_like(leaf.value))
                     for name, leaf in param_leaves(root).items()}
            adam_step(opt, model.params, grads, lr_map,
                      beta1=config.adam_beta1, beta2=config.adam_beta2,
                      eps=config.adam_eps)
            # an eliminated coordinate parks exactly at -alpha: the pull
            # |w + alpha| has its minimum there and elimination is one-way
            w1 = model.params["w_co1"]
            w1[w1 <= 0.0] = -config.alpha
            if model.effective_dim() == 0:
                raise TrainingAbort(
                    f"all gate weights eliminated at epoch {epoch}; "
                    "lambda_reg is too aggressive for this data",
                    diagnostics={"epoch": epoch, "batch_start": int(lo),
                                 "breakdown": breakdown.to_dict()})
            parts.append(breakdown)

        epoch_bd = _mean_breakdown(parts)
        l_eff = model.effective_dim()
        if l_eff > prev_l_eff:
            raise AssertionError(
                f"internal error: effective dimension grew {prev_l_eff} -> {l_eff}")
        prev_l_eff = l_eff
        l_eff_history.append(l_eff)

        t_loss = test_loss(model, x_test)
        p_loss = projected_test_loss(model, x_test)

        if l_eff not in best or t_loss < best[l_eff].test_loss:
            best[l_eff] = BestState(model=model.copy(), test_loss=t_loss, epoch=epoch)
        k_down = l_eff - 1
        if k_down not in best or p_loss < best[k_down].test_loss:
            best[k_down] = BestState(model=model.zero_forced(), test_loss=p_loss,
                                     epoch=epoch)
        for k in [k for k in best if k >= l_eff + 2]:
            del best[k]

        row = dict(epoch=epoch, **epoch_bd.to_dict(), test_loss=t_loss,
                   projected_test_loss=p_loss, l_eff=l_eff, lr_factor=factor)
        history.append(row)
        if progress is not None:
            progress(epoch, row)

    d_tilde = model.effective_dim()
    losses = {k: best[k].test_loss
              for k in (d_tilde - 1, d_tilde, d_tilde + 1) if k in best}
    report = EstimateReport(
        d_tilde=d_tilde,
        losses=losses,
        loss_history=history,
        l_eff_history=l_eff_history,
        wall_time_s=time.perf_counter() - t_start,
        config=config,
    )
    return best, report


def estimate_dimension(x, config, h_column=None, progress=None) -> EstimateReport:
    """Convenience wrapper around `run_training` returning just the report."""
    _, report = run_training(x, config, h_column=h_column, progress=progress)
    return report
