"""Reading occlusion-order structure out of trained composition weights.

For a target category T and another category i, the sign pattern of the
learned pair (vw[T,i], ow[T,i]) indicates which of the two tends to
occlude the other across the dataset. A dead zone of width epsilon keeps
near-zero weights from producing spurious directions.
"""

from dataclasses import dataclass

from .composition import CompositionWeights
from .scenes import OcclusionPriorSpec, pairwise_occlusion_probability
from .util import round9

TARGET_OCCLUDES_OTHER = "target-occludes-other"
OTHER_OCCLUDES_TARGET = "other-occludes-target"
MIXED = "mixed"
NONE = "none"

POSITIVE = "positive"
NEGATIVE = "negative"

DEFAULT_EPSILON = 0.05


def _sign(v: float, epsilon: float) -> int:
    if abs(v) <= epsilon:
        return 0
    return 1 if v > 0 else -1


def _correlation(v: float, epsilon: float) -> str:
    s = _sign(v, epsilon)
    if s > 0:
        return POSITIVE
    if s < 0:
        return NEGATIVE
    return NONE


def _direction(vw: float, ow: float, epsilon: float) -> str:
    sv = _sign(vw, epsilon)
    so = _sign(ow, epsilon)
    if sv == 0 and so == 0:
        return NONE
    if sv < 0 and so > 0:
        # the other category's visible evidence argues against the target,
        # its occluded evidence argues for it: the target sits in front
        return TARGET_OCCLUDES_OTHER
    if sv > 0 and so > 0:
        if vw > ow:
            return OTHER_OCCLUDES_TARGET
        if ow > vw:
            return TARGET_OCCLUDES_OTHER
    return MIXED


@dataclass(frozen=True)
class RelationFinding:
    target: int
    other: int
    vw: float
    ow: float
    vw_correlation: str
    ow_correlation: str
    direction: str

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "other": self.other,
            "vw": round9(self.vw),
            "ow": round9(self.ow),
            "vw_correlation": self.vw_correlation,
            "ow_correlation": self.ow_correlation,
            "direction": self.direction,
        }


def analyze(w: CompositionWeights, target: int, epsilon: float = DEFAULT_EPSILON):
    """One finding per other category, classified by the rules above."""
    if not (0 <= target < w.n):
        raise ValueError(f"target category {target} out of range")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    findings = []
    for i in range(w.n):
        if i == target:
            continue
        vw = float(w.vw[target, i])
        ow = float(w.ow[target, i])
        findings.append(
            RelationFinding(
                target=target,
                other=i,
                vw=vw,
                ow=ow,
                vw_correlation=_correlation(vw, epsilon),
                ow_correlation=_correlation(ow, epsilon),
                direction=_direction(vw, ow, epsilon),
            )
        )
    return findings


def analyze_all(w: CompositionWeights, epsilon: float = DEFAULT_EPSILON):
    out = []
    for t in range(w.n):
        out.extend(analyze(w, t, epsilon))
    return out


def dominant_direction(prior: OcclusionPriorSpec, target: int, other: int, margin: float):
    """The generator's dominant occlusion order for an ordered pair.

    None when the pair is not decisive at the given margin.
    """
    p = pairwise_occlusion_probability(prior, target, other)
    if p >= 0.5 + margin:
        return TARGET_OCCLUDES_OTHER
    if p <= 0.5 - margin:
        return OTHER_OCCLUDES_TARGET
    return None


def prior_agreement(findings, prior: OcclusionPriorSpec, margin: float) -> float:
    """Fraction of decisive ordered pairs whose finding matches the prior.

    Pairs classified "none" or "mixed" count as mismatches. Vacuously 1.0
    when no pair is decisive at the margin.
    """
    if not (0 < margin < 0.5):
        raise ValueError("margin must lie in (0, 0.5)")
    n = prior.n
    by_pair = {}
    for f in findings:
        if not (0 <= f.target < n and 0 <= f.other < n):
            raise ValueError(
                f"finding for pair ({f.target}, {f.other}) is outside the prior's categories"
            )
        by_pair[(f.target, f.other)] = f
    decisive = 0
    matched = 0
    for t in range(n):
        for i in range(n):
            if i == t:
                continue
            dominant = dominant_direction(prior, t, i, margin)
            if dominant is None:
                continue
            if (t, i) not in by_pair:
                raise ValueError(f"missing finding for decisive pair ({t}, {i})")
            decisive += 1
            if by_pair[(t, i)].direction == dominant:
                matched += 1
    if decisive == 0:
        return 1.0
    return matched / decisive
