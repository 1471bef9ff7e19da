"""Per-epoch training statistics and the overtraining (collapse) monitor."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from loggan.corpus import EOS, PAD
from loggan.neural.nets import DiscriminatorNet, GeneratorNet, NoiseSource, sample_batch
from loggan.neural.objectives import clamped_log, nll_per_token

CSV_COLUMNS = ("epoch", "g_loss", "d_loss", "g_nll", "d_nll", "acc")

COLLAPSE_DIVERSITY = 0.1
COLLAPSE_ACC = 0.8

TAG_EVAL = 7
TAG_PROBE = 8


@dataclass
class MetricsRow:
    epoch: int
    g_loss: float | None = None
    d_loss: float | None = None
    g_nll: float | None = None
    d_nll: float | None = None
    acc: float | None = None
    diversity: float | None = None
    phase: str = "mle"

    def __post_init__(self) -> None:
        if self.acc is not None and not 0.0 <= self.acc <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        for name in ("g_nll", "d_nll"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")


class TrainingMetrics(list):
    """Ordered list of :class:`MetricsRow`, one per epoch."""

    @property
    def final(self) -> MetricsRow | None:
        return self[-1] if self else None

    def to_dicts(self) -> list[dict]:
        return [asdict(r) for r in self]

    def write_csv(self, path: str | Path, append: bool = False) -> None:
        path = Path(path)
        new = not append or not path.exists() or path.stat().st_size == 0
        with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(CSV_COLUMNS)
            for r in self:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def read_csv(path: str | Path) -> TrainingMetrics:
    out = TrainingMetrics()
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.append(MetricsRow(int(rec["epoch"]), *(float(rec[c]) if rec[c] else None for c in CSV_COLUMNS[1:])))
    return out


def distinct_token_ratio(ids: np.ndarray) -> float:
    """Distinct tokens divided by total tokens, ignoring PAD and EOS."""
    toks = ids[(ids != PAD) & (ids != EOS)]
    return float(len(np.unique(toks)) / toks.size) if toks.size else 0.0


def probe_diversity(g: GeneratorNet, n: int, max_len: int, noise: NoiseSource,
                    reference: np.ndarray | None = None) -> float:
    """Distinct-token ratio of ``n`` samples, relative to ``n`` real reference sequences if given.

    Log lines repeat most of their tokens, so the raw ratio of real data is
    itself near 0.1 for words and far below it for characters; dividing by
    the reference ratio puts a healthy generator near 1 in either mode.
    """
    raw = distinct_token_ratio(sample_batch(g, noise, n, max_len).ids)
    if reference is None:
        return raw
    ref = distinct_token_ratio(reference[:n])
    return raw / ref if ref > 0 else raw


def discriminator_scores(d: DiscriminatorNet, ids: np.ndarray, batch: int = 256) -> np.ndarray:
    out = [d.probs_np(_trim(ids[i:i + batch])) for i in range(0, len(ids), batch)]
    return np.concatenate(out) if out else np.zeros(0)


def _trim(ids: np.ndarray) -> np.ndarray:
    width = max(int((ids != PAD).sum(axis=1).max()), 1) if len(ids) else 1
    return ids[:, :width]


def binary_metrics(p_real: np.ndarray, p_fake: np.ndarray) -> tuple[float, float]:
    """(mean binary NLL, accuracy at threshold 0.5) on a labeled real/fake set."""
    nll = -np.concatenate([clamped_log(p_real), clamped_log(1.0 - p_fake)])
    correct = np.concatenate([p_real > 0.5, p_fake <= 0.5])
    return float(nll.mean()), float(correct.mean())


def compute_metrics(g: GeneratorNet, d: DiscriminatorNet | None, test_ids: np.ndarray, epoch: int, seed: int,
                    max_len: int, g_loss: float | None = None, d_loss: float | None = None,
                    probe_samples: int = 200, phase: str = "mle") -> MetricsRow:
    """Held-out statistics for one epoch.

    ``g_nll`` is the per-token NLL of real held-out sequences under G; the
    discriminator is scored on those reals plus as many fresh G samples.
    """
    if len(test_ids) == 0:
        raise ValueError("held-out set is empty")
    row = MetricsRow(epoch, g_loss=g_loss, d_loss=d_loss, phase=phase)
    row.g_nll = nll_per_token(g, test_ids)
    if d is not None:
        fakes = sample_batch(g, NoiseSource.derive(seed, TAG_EVAL, epoch), len(test_ids), max_len).ids
        row.d_nll, row.acc = binary_metrics(discriminator_scores(d, test_ids), discriminator_scores(d, fakes))
    row.diversity = probe_diversity(g, probe_samples, max_len, NoiseSource.derive(seed, TAG_PROBE, epoch), test_ids)
    return row


def detect_collapse(history: Sequence[MetricsRow], window: int,
                    diversity_floor: float = COLLAPSE_DIVERSITY, acc_floor: float = COLLAPSE_ACC) -> str | None:
    """Alarm text when the latest probe diversity is below the floor while accuracy stayed high.

    Accuracy must exceed ``acc_floor`` on every row of the trailing window;
    with fewer than ``window`` rows there is not enough evidence and no alarm.
    """
    if window < 1 or len(history) < window:
        return None
    recent = list(history)[-window:]
    last = recent[-1]
    if last.diversity is None or any(r.acc is None or math.isnan(r.acc) for r in recent):
        return None
    if last.diversity < diversity_floor and all(r.acc > acc_floor for r in recent):
        return (f"overtraining suspected at epoch {last.epoch}: probe diversity {last.diversity:.3f} "
                f"< {diversity_floor} while accuracy stayed > {acc_floor} for {window} epochs")
    return None
