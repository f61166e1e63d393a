"""Local surrogate explanations of a black-box relevance scorer.

A sentence is perturbed by deleting feature units (distinct words, or one
atomic word span plus the remaining words), each perturbation is scored by
the black box, and a kernel-weighted ridge regression over the keep-masks
yields one contribution weight per unit. The intercept is never penalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .textnorm import Word, normalize, split_words


class ExplainError(Exception):
    """Bad explanation input or an unusable surrogate system."""


@dataclass(frozen=True)
class Token:
    """One feature unit: a distinct (case-insensitive) word surface.

    surface/start/end describe the first occurrence; positions lists every
    word index the unit covers. Deleting the unit deletes all of them.
    """

    surface: str
    start: int
    end: int
    positions: tuple[int, ...]

    @property
    def key(self) -> str:
        return self.surface.casefold()


@dataclass
class TokenizedText:
    """A sentence split into positional words and deduplicated token units."""

    original: str
    words: list[Word]
    tokens: list[Token]

    @property
    def n(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenizedText:
    """Split *text* into words and merge repeated surfaces into one unit.

    Words split on whitespace and punctuation; digit runs with internal
    '.', ',', ':' or '-' stay whole, so dates, clock times and decimals
    survive as single units. Trailing punctuation such as a final '?' is
    dropped with the other separators.
    """
    words = split_words(text)
    if not words:
        raise ExplainError("cannot tokenize an empty or punctuation-only string")
    order: dict[str, list[int]] = {}
    for index, word in enumerate(words):
        order.setdefault(word.key, []).append(index)
    tokens = [
        Token(surface=words[positions[0]].surface,
              start=words[positions[0]].start,
              end=words[positions[0]].end,
              positions=tuple(positions))
        for positions in order.values()
    ]
    return TokenizedText(original=text, words=words, tokens=tokens)


@dataclass
class ExplainConfig:
    sample_count: int = 1000
    kernel_width: float = 25.0
    ridge_lambda: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ExplainError("sample_count must be at least 1")
        if self.kernel_width <= 0:
            raise ExplainError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ExplainError("ridge_lambda must be non-negative")


@dataclass
class Perturbation:
    """One masked variant of the sentence: mask[i] == 1 keeps unit i."""

    mask: tuple[int, ...]
    sentence: str
    kernel_weight: float
    probability: float | None = None


def kernel_weight(mask: Sequence[int], config: ExplainConfig) -> float:
    """exp(-D^2 / width^2) with D the cosine distance of the keep-mask to
    the all-ones mask: D = 1 - sqrt(k/n). The all-zero mask weighs 0."""
    n = len(mask)
    if n == 0:
        raise ExplainError("kernel_weight needs a non-empty mask")
    k = sum(1 for bit in mask if bit)
    if k == 0:
        return 0.0
    distance = 1.0 - math.sqrt(k / n)
    return math.exp(-(distance * distance) / (config.kernel_width ** 2))


@dataclass(frozen=True)
class _Feature:
    label: str
    positions: tuple[int, ...]


class _Space:
    """A feature basis over the positional words of one sentence."""

    def __init__(self, words: list[Word], features: list[_Feature]):
        self.words = words
        self.features = features
        self.n = len(features)
        owner = [-1] * len(words)
        for index, feature in enumerate(features):
            for position in feature.positions:
                owner[position] = index
        self._owner = owner

    def render(self, mask: Sequence[int]) -> str:
        kept = [
            word.surface for position, word in enumerate(self.words)
            if self._owner[position] >= 0 and mask[self._owner[position]]
        ]
        return " ".join(kept)


def _token_space(text: TokenizedText) -> _Space:
    features = [_Feature(token.surface, token.positions) for token in text.tokens]
    return _Space(text.words, features)


def _span_space(text: TokenizedText, span: tuple[int, int]) -> tuple[_Space, int]:
    """Feature basis with words[span] fused into one atomic block feature.

    Returns the space and the block's feature index. Units living entirely
    inside the block disappear as separate features; units straddling it
    keep only their outside positions.
    """
    start, end = span
    if not 0 <= start < end <= len(text.words):
        raise ExplainError(f"span {span} out of range for {len(text.words)} words")
    block_positions = tuple(range(start, end))
    block_label = normalize(" ".join(w.surface for w in text.words[start:end]))
    features = [_Feature(block_label, block_positions)]
    for token in text.tokens:
        outside = tuple(p for p in token.positions if not start <= p < end)
        if outside:
            features.append(_Feature(token.surface, outside))
    return _Space(text.words, features), 0


def _sample(space: _Space, config: ExplainConfig) -> list[Perturbation]:
    n = space.n
    rng = np.random.default_rng(config.seed)
    identity = (1,) * n
    masks = [identity]
    for _ in range(config.sample_count - 1):
        if n == 1:
            masks.append(identity)
            continue
        removal = int(rng.integers(1, n))
        removed = rng.choice(n, size=removal, replace=False)
        mask = [1] * n
        for index in removed:
            mask[index] = 0
        masks.append(tuple(mask))
    return [
        Perturbation(mask=mask, sentence=space.render(mask),
                     kernel_weight=kernel_weight(mask, config))
        for mask in masks
    ]


def sample_perturbations(text: TokenizedText, config: ExplainConfig) -> list[Perturbation]:
    """Draw config.sample_count masks over the token units. The first is
    always the identity; the rest remove a uniform count of 1..n-1 units,
    chosen uniformly. A one-unit sentence yields identity duplicates."""
    return _sample(_token_space(text), config)


def enumerate_perturbations(text: TokenizedText, config: ExplainConfig) -> list[Perturbation]:
    """All 2^n - 1 non-empty masks, identity first. Exhaustive mode for
    small n; refuses n > 16."""
    space = _token_space(text)
    n = space.n
    if n > 16:
        raise ExplainError(f"exhaustive enumeration over {n} units is too large")
    masks = [(1,) * n]
    for code in range((1 << n) - 2, 0, -1):
        masks.append(tuple((code >> i) & 1 for i in range(n)))
    return [
        Perturbation(mask=mask, sentence=space.render(mask),
                     kernel_weight=kernel_weight(mask, config))
        for mask in masks
    ]


Scorer = Callable[[str, object], float]


def _score_all(perturbations: list[Perturbation], scorer: Scorer, target: object) -> None:
    cache: dict[str, float] = {}
    for index, perturbation in enumerate(perturbations):
        if perturbation.sentence in cache:
            perturbation.probability = cache[perturbation.sentence]
            continue
        try:
            probability = float(scorer(perturbation.sentence, target))
        except Exception as err:
            raise ExplainError(f"scorer failed on perturbation {index}: {err}") from err
        if not 0.0 <= probability <= 1.0:
            raise ExplainError(
                f"scorer returned {probability!r} on perturbation {index}, outside [0, 1]")
        cache[perturbation.sentence] = probability
        perturbation.probability = probability


def fit_surrogate(perturbations: list[Perturbation],
                  config: ExplainConfig) -> tuple[np.ndarray, float]:
    """Solve the kernel-weighted ridge normal equations over the keep-masks.

    Minimizes sum_z pi(z) * (p(z) - w.z - b)^2 + lambda * ||w||^2 with the
    intercept b left out of the penalty. Perturbations with non-positive
    kernel weight are excluded. Raises when fewer than two weighted points
    remain, when any point is unscored, or when the system is singular
    (only possible with ridge_lambda == 0).
    """
    points = [p for p in perturbations if p.kernel_weight > 0]
    if len(points) < 2:
        raise ExplainError("need at least two positively weighted perturbations")
    for point in points:
        if point.probability is None:
            raise ExplainError("every perturbation must be scored before fitting")
    n = len(points[0].mask)
    design = np.ones((len(points), n + 1))
    design[:, :n] = np.array([p.mask for p in points], dtype=float)
    targets = np.array([p.probability for p in points], dtype=float)
    weights = np.array([p.kernel_weight for p in points], dtype=float)

    weighted = design * weights[:, None]
    normal = weighted.T @ design
    normal[np.arange(n), np.arange(n)] += config.ridge_lambda
    moment = weighted.T @ targets
    try:
        solution = np.linalg.solve(normal, moment)
    except np.linalg.LinAlgError:
        raise ExplainError(
            "singular surrogate system; set ridge_lambda > 0 to regularize") from None
    return solution[:n], float(solution[n])


@dataclass
class Explanation:
    """Fitted token attributions for one (sentence, target) pair, in
    sentence order of first occurrence."""

    text: str
    units: list[str]
    weights: list[float]
    intercept: float
    sample_count: int
    seed: int
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._index = {unit.casefold(): i for i, unit in enumerate(self.units)}

    def weight_of(self, surface: str) -> float | None:
        index = self._index.get(surface.casefold())
        return self.weights[index] if index is not None else None

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(zip(self.units, self.weights), key=lambda item: -item[1])

    def to_record(self) -> dict:
        return {
            "text": self.text,
            "units": [[unit, weight] for unit, weight in zip(self.units, self.weights)],
            "intercept": self.intercept,
            "seed": self.seed,
            "sample_count": self.sample_count,
        }


def _as_tokenized(text: str | TokenizedText) -> TokenizedText:
    return text if isinstance(text, TokenizedText) else tokenize(text)


def explain(text: str | TokenizedText, scorer: Scorer, target: object,
            config: ExplainConfig | None = None) -> Explanation:
    """Fit a token-level surrogate for scorer(text, target)."""
    config = config or ExplainConfig()
    tokenized = _as_tokenized(text)
    perturbations = sample_perturbations(tokenized, config)
    _score_all(perturbations, scorer, target)
    weights, intercept = fit_surrogate(perturbations, config)
    return Explanation(
        text=tokenized.original,
        units=[token.surface for token in tokenized.tokens],
        weights=[float(w) for w in weights],
        intercept=intercept,
        sample_count=config.sample_count,
        seed=config.seed,
    )


@dataclass(frozen=True)
class SpanStat:
    """Fitted contribution of one contiguous word span held atomic."""

    text: str
    start: int
    end: int
    width: int
    contribution: float


def explain_spans(text: str | TokenizedText, scorer: Scorer, target: object,
                  spans: list[tuple[int, int]],
                  config: ExplainConfig | None = None) -> list[SpanStat]:
    """Refit the surrogate once per span with that span fused into a single
    atomic unit; other words stay individual. Returns stats sorted by
    contribution, descending. Span indices address positional words, and a
    span's contribution is not additive in its member token weights."""
    config = config or ExplainConfig()
    tokenized = _as_tokenized(text)
    stats = []
    for span in spans:
        space, block = _span_space(tokenized, span)
        perturbations = _sample(space, config)
        _score_all(perturbations, scorer, target)
        weights, _ = fit_surrogate(perturbations, config)
        stats.append(SpanStat(
            text=space.features[block].label,
            start=span[0],
            end=span[1],
            width=span[1] - span[0],
            contribution=float(weights[block]),
        ))
    return sorted(stats, key=lambda s: (-s.contribution, s.start, s.end))
