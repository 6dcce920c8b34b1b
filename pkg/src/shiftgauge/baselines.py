"""Comparison risk predictors: a Ben-David style bound and the confidence score."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .classdiv import HypothesisClass, estimate_hdh
from .data import Dataset
from .errors import InputError, MetricError
from .hypothesis import Hypothesis, MlpSpec, zero_one_risk
from .trainer import DirConfig, source_split

BEN_DAVID = "ben_david"
CONF_SCORE = "conf_score"
LAMBDA_NOTE = "omitted (unobservable)"

ClassMode = Literal["source_constrained", "dir_constrained"]


@dataclass
class BaselineEstimate:
    method: str
    predicted_risk: float
    components: dict = field(default_factory=dict)

    @property
    def clamped_risk(self) -> float:
        return min(max(self.predicted_risk, 0.0), 1.0)


def ben_david_estimate(h: Hypothesis, class_mode: ClassMode, source: Dataset, target: Dataset,
                       cfg: DirConfig, class_spec: MlpSpec | None = None) -> BaselineEstimate:
    """Validation source risk of ``h`` plus an HΔH estimate over the chosen class.

    ``source_constrained`` uses {h : R_S(h) <= epsilon}; ``dir_constrained`` the
    DIR check-model set. The lambda term of the bound is left out.
    """
    if class_mode not in ("source_constrained", "dir_constrained"):
        raise InputError(f"unknown class_mode {class_mode!r}")
    spec = class_spec or h.spec
    constraint = "source_risk" if class_mode == "source_constrained" else "dir"
    _, s_val = source_split(source, cfg)
    src = zero_one_risk(h, s_val.features, s_val.labels)
    est = estimate_hdh(HypothesisClass(spec, constraint, cfg.epsilon), source, target.unlabeled(), cfg)
    return BaselineEstimate(BEN_DAVID, src + est.value,
                            {"src_risk": src, "hdh_estimate": est.value, "class_mode": class_mode,
                             "epsilon": est.epsilon, "lambda_h": LAMBDA_NOTE})


def conf_from_scores(q_source: Sequence[float], q_target: Sequence[float]) -> float:
    """Mean source confidence minus mean target confidence."""
    qs = np.asarray(q_source, dtype=np.float64)
    qt = np.asarray(q_target, dtype=np.float64)
    if qs.size == 0 or qt.size == 0:
        raise InputError("confidence score needs non-empty source and target sets")
    return float(qs.mean() - qt.mean())


def conf_score_estimate(h: Hypothesis, source: Dataset, target: Dataset,
                        cfg: DirConfig | None = None) -> BaselineEstimate:
    """R_S(h) + (E_S[max softmax] - E_T[max softmax]), both on the source validation split."""
    cfg = cfg or DirConfig()
    _, s_val = source_split(source, cfg)
    if len(target.features) == 0:
        raise InputError("confidence score needs a non-empty target set")
    src = zero_one_risk(h, s_val.features, s_val.labels)
    conf = conf_from_scores(h.confidence(s_val.features), h.confidence(target.features))
    pred = src + conf
    return BaselineEstimate(CONF_SCORE, pred,
                            {"src_risk": src, "conf": conf,
                             "clamped_risk": min(max(pred, 0.0), 1.0)})


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if len(a) != len(b):
        raise MetricError(f"series lengths differ: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise MetricError("pearson correlation needs at least two pairs")
    for name, v in (("predicted", a), ("true", b)):
        if np.all(v == v[0]):
            raise MetricError(f"pearson correlation undefined: the {name} series is constant")
    da, db = a - a.mean(), b - b.mean()
    r = float((da * db).sum() / math.sqrt((da * da).sum() * (db * db).sum()))
    return min(max(r, -1.0), 1.0)


def score_methods(reports: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """(mean absolute error, Pearson r) over (predicted, true) pairs."""
    if not reports:
        raise MetricError("no (prediction, truth) pairs to score")
    pred = np.array([p for p, _ in reports], dtype=np.float64)
    true = np.array([t for _, t in reports], dtype=np.float64)
    return float(np.mean(np.abs(pred - true))), pearson(pred, true)
