"""Seeded synthetic fund universes in the ingest schema.

Each category owns an archetype: for every percentage group a sparse
composition with a group total, preferred benchmark levels and typical
holdings counts. Categories come in families that share part of their
archetype, which produces the near-neighbour confusions seen in real
category systems. A record mixes its archetype with a random composition::

    values = separability * archetype + (1 - separability) * noise

Zero cells are written as missing, as in the vendor extract, and a further
``sparsity`` fraction of nonzero cells is dropped to missing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .preprocess import round_half_away
from .rng import generator
from .schema import CATEGORICAL, COUNT, DEFAULT_SCHEMA, PERCENTAGE, FeatureGroup, FundUniverse

CATEGORY_NAMES = (
    "US Equity Large Cap Blend", "US Fixed Income", "Moderate Allocation", "US Equity Large Cap Growth",
    "US Equity Large Cap Value", "US Municipal Fixed Income", "US Equity Mid Cap", "US Equity Small Cap",
    "Global Equity Large Cap", "Cautious Allocation", "Aggressive Allocation", "Flexible Allocation",
    "Global Emerging Markets Equity", "USD Money Market", "USD Corporate Bond", "USD High Yield Bond",
    "USD Government Bond", "Global Fixed Income", "Sector Equity Technology", "Sector Equity Healthcare",
    "Sector Equity Financial Services", "Sector Equity Energy", "Property - Indirect Global",
    "Commodities Broad Basket", "Europe Equity Large Cap", "Japan Equity", "Asia ex-Japan Equity",
    "Global Emerging Markets Fixed Income", "Convertibles", "Inflation-Protected Fixed Income",
    "Bank Loan", "Preferred Stock", "Allocation Miscellaneous", "Fixed Income Miscellaneous",
    "Long/Short Credit", "Global Macro", "Multi-alternative", "Long/Short Equity", "Equity Miscellaneous",
    "Trading Tools", "Options Trading", "Target Date", "Sector Equity Utilities",
    "Sector Equity Consumer Goods & Services", "Sector Equity Industrial Materials",
    "Sector Equity Precious Metals", "Sector Equity Natural Resources", "Sector Equity Communications",
    "Sector Equity Infrastructure", "Latin America Equity", "China Equity", "India Equity",
    "Greater China Equity", "Money Market - Other", "Market Neutral", "Event Driven",
    "Systematic Trend", "Currency", "Miscellaneous", "USD Diversified Bond - Short Term",
    "Global Equity Mid/Small Cap",
)

FEATURE_NAMES = {
    "Asset Allocation": ("Stock Long", "Bond Long", "Cash Long", "Other Long", "Convertible Long",
                         "Preferred Long", "US Stock Long", "Non-US Stock Long"),
    "Holdings": ("Number of Stock Holdings (Long)", "Number of Bond Holdings (Long)",
                 "Number of Other Holdings (Long)", "Number of Holdings (Long)"),
    "Benchmark": ("SP_DowJones", "FTSE_Russell"),
}

GROUP_SCALE_SD = 3.0

FUND_TYPE_SHARES = (("ETF", 2352), ("MM", 364), ("OE", 7601))


def feature_names(group: FeatureGroup) -> tuple[str, ...]:
    named = FEATURE_NAMES.get(group.name, ())
    if len(named) >= group.declared_arity:
        return named[: group.declared_arity]
    return named + tuple(f"{group.name} {k:03d}" for k in range(len(named) + 1, group.declared_arity + 1))


@dataclass(frozen=True)
class GeneratorConfig:
    n_funds: int = 5000
    n_categories: int = 20
    schema: tuple[FeatureGroup, ...] = DEFAULT_SCHEMA
    separability: float = 0.8
    sparsity: float = 0.05
    imbalance: float = 1.0
    benchmark_noise: float = 0.05
    benchmark_levels: tuple[int, ...] = (89, 42)
    family_size: int = 3
    family_share: float = 0.80
    confusable: tuple[tuple[int, int], ...] = ()
    mask_confusable_benchmarks: bool = False
    seed: int = 42

    def __post_init__(self):
        if self.n_categories < 2:
            raise ValueError("n_categories must be >= 2")
        if self.n_funds < 3 * self.n_categories:
            raise ValueError(f"infeasible config: n_funds={self.n_funds} < 3 * n_categories")
        if not 0.0 < self.separability <= 1.0:
            raise ValueError("separability must lie in (0, 1]")
        for name in ("sparsity", "benchmark_noise", "family_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.imbalance < 0:
            raise ValueError("imbalance must be nonnegative")
        for a, b in self.confusable:
            if not (0 <= a < self.n_categories and 0 <= b < self.n_categories) or a == b:
                raise ValueError(f"bad confusable pair {(a, b)}")
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "confusable", tuple(tuple(p) for p in self.confusable))


PRESETS = {
    "paper-shape": GeneratorConfig(),
    "small": GeneratorConfig(n_funds=600, n_categories=8),
}


def preset(name: str, **overrides) -> GeneratorConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


def category_names(n: int) -> tuple[str, ...]:
    names = list(CATEGORY_NAMES[:n])
    names += [f"Category {k:02d}" for k in range(len(names) + 1, n + 1)]
    return tuple(names)


def category_sizes(n_funds: int, n_categories: int, imbalance: float) -> np.ndarray:
    """Power-law sizes (rank ** -imbalance) scaled to ``n_funds``, each at least 3.

    Rounding uses largest remainders; the floor is paid for by the largest
    categories.
    """
    raw = np.arange(1, n_categories + 1, dtype=np.float64) ** -imbalance
    raw = raw / raw.sum() * n_funds
    sizes = np.floor(raw).astype(np.int64)
    short = n_funds - sizes.sum()
    sizes[np.argsort(-(raw - sizes), kind="stable")[:short]] += 1
    for c in np.flatnonzero(sizes < 3):
        need = 3 - sizes[c]
        sizes[c] = 3
        while need:
            donor = int(np.argmax(sizes))
            sizes[donor] -= 1
            need -= 1
    return sizes


def _composition(rng, arity: int, total: float, support_frac=(0.05, 0.3), support=None) -> np.ndarray:
    """Gamma weights on a support (given, or random of the drawn size), scaled to ``total``."""
    out = np.zeros(arity)
    if support is None or support.size == 0:
        k = max(1, int(round(arity * rng.uniform(*support_frac))))
        support = rng.choice(arity, size=min(k, arity), replace=False)
    weights = rng.gamma(0.8, 1.0, size=support.size) + 1e-3
    out[support] = weights / weights.sum() * total
    return out


def _cap_sum(values: np.ndarray, cap: float = 100.0) -> np.ndarray:
    """Round to 4 decimals and trim the largest entry if rounding pushed the sum past ``cap``."""
    r = round_half_away(values)
    excess = r.sum() - cap
    if excess > 0:
        j = int(np.argmax(r))
        r[j] = max(0.0, round_half_away(np.array([r[j] - np.ceil(excess * 1e4) / 1e4]))[0])
    return r


@dataclass
class _Archetype:
    totals: dict = field(default_factory=dict)
    comps: dict = field(default_factory=dict)
    holdings: np.ndarray | None = None
    benchmarks: list = field(default_factory=list)


def _archetypes(config: GeneratorConfig) -> list[_Archetype]:
    rng = generator(config.seed, "archetypes")
    pct_groups = [g for g in config.schema if g.kind == PERCENTAGE]
    count_groups = [g for g in config.schema if g.kind == COUNT]
    cat_groups = [g for g in config.schema if g.kind == CATEGORICAL]
    n_fam = -(-config.n_categories // max(config.family_size, 1))

    def draw_comps():
        totals, comps = {}, {}
        for i, g in enumerate(pct_groups):
            active = i == 0 or rng.random() < 0.6
            totals[g.name] = rng.uniform(40.0, 100.0) if active else 0.0
            comps[g.name] = _composition(rng, g.declared_arity, totals[g.name], (0.05, 0.3))
        return totals, comps

    def draw_benchmarks():
        sets = []
        for g in cat_groups:
            prefs = []
            for j in range(g.declared_arity):
                levels = config.benchmark_levels[j] if j < len(config.benchmark_levels) else 10
                if j > 0 and rng.random() < 0.25:
                    prefs.append(None)  # always missing for this category
                else:
                    prefs.append(rng.choice(levels, size=int(rng.integers(1, 4)), replace=False))
            sets.append(prefs)
        return sets

    families = [(*draw_comps(), draw_benchmarks()) for _ in range(n_fam)]
    fam_holdings = [{g.name: rng.uniform(np.log(5), np.log(3000), size=g.declared_arity)
                     for g in count_groups} for _ in range(n_fam)]
    lam = config.family_share
    out = []
    for c in range(config.n_categories):
        fam = c // max(config.family_size, 1)
        fam_totals, fam_comps, fam_bench = families[fam]
        a = _Archetype()
        # Siblings share the family's support and differ in magnitudes only.
        for g in pct_groups:
            support = np.flatnonzero(fam_comps[g.name])
            own_total = rng.uniform(40.0, 100.0) if fam_totals[g.name] > 0 else 0.0
            own = _composition(rng, g.declared_arity, own_total, support=support)
            a.totals[g.name] = lam * fam_totals[g.name] + (1 - lam) * own_total
            a.comps[g.name] = lam * fam_comps[g.name] + (1 - lam) * own
        a.holdings = {
            g.name: np.exp(lam * fam_holdings[fam][g.name]
                           + (1 - lam) * rng.uniform(np.log(5), np.log(3000), size=g.declared_arity))
            for g in count_groups
        }
        own_bench = draw_benchmarks()
        a.benchmarks = [
            [fb if rng.random() < lam else ob for fb, ob in zip(fam_g, own_g)]
            for fam_g, own_g in zip(fam_bench, own_bench)
        ]
        out.append(a)
    for src, dst in config.confusable:
        out[dst].totals = dict(out[src].totals)
        out[dst].comps = dict(out[src].comps)
        out[dst].holdings = dict(out[src].holdings)
    return out


def level_name(group: str, feature_index: int, level: int) -> str:
    if group == "Benchmark" and feature_index == 0:
        return f"S&P DJ Index {level + 1:03d}"
    if group == "Benchmark" and feature_index == 1:
        return f"FTSE Russell Index {level + 1:03d}"
    return f"{group} level {level + 1:03d}"


def generate_universe(config: GeneratorConfig) -> FundUniverse:
    """Draw a universe; identical configs give identical universes."""
    schema = config.schema
    names = category_names(config.n_categories)
    sizes = category_sizes(config.n_funds, config.n_categories, config.imbalance)
    size_rng = generator(config.seed, "size-order")
    sizes = sizes[size_rng.permutation(config.n_categories)]
    labels = np.repeat(np.arange(config.n_categories), sizes)
    labels = labels[generator(config.seed, "record-order").permutation(labels.size)]
    archetypes = _archetypes(config)
    masked = {c for pair in config.confusable for c in pair} if config.mask_confusable_benchmarks else set()

    columns = [(g.name, f) for g in schema for f in feature_names(g)]
    num_groups = [g for g in schema if g.kind != CATEGORICAL]
    cat_groups = [g for g in schema if g.kind == CATEGORICAL]
    n_num = sum(g.declared_arity for g in num_groups)
    n_cat = sum(g.declared_arity for g in cat_groups)
    numeric = np.zeros((config.n_funds, n_num))
    categorical = np.empty((config.n_funds, n_cat), dtype=object)
    type_names = [t for t, _ in FUND_TYPE_SHARES]
    type_p = np.array([s for _, s in FUND_TYPE_SHARES], dtype=np.float64)
    type_p /= type_p.sum()
    s = config.separability
    fund_types = []

    for i, c in enumerate(labels):
        rng = generator(config.seed, "record", i)
        arch = archetypes[c]
        row = []
        for g in num_groups:
            if g.kind == PERCENTAGE:
                noise = _composition(rng, g.declared_arity, rng.uniform(0.0, 100.0), (0.0, 0.05),
                                     support=np.flatnonzero(arch.comps[g.name]))
                vals = s * arch.comps[g.name] + (1 - s) * noise
                # Per-record group scale; keeps within-group ratios but blurs each feature's floor.
                vals = vals * np.exp((1 - s) * rng.normal(0.0, GROUP_SCALE_SD))
                total = vals.sum()
                if total > 100.0:
                    vals = vals * (100.0 / total)
                vals = _cap_sum(vals)
            else:
                centre = arch.holdings[g.name]
                # Log-normal spread shrinking to the archetype count as separability -> 1.
                vals = np.round(centre * np.exp((1 - s) * rng.normal(0.0, 2.0, size=centre.size)))
            row.append(vals)
        row = np.concatenate(row) if row else np.zeros(0)
        if config.sparsity > 0:
            row[rng.random(row.size) < config.sparsity] = 0.0
        row[row == 0.0] = np.nan
        numeric[i] = row

        k = 0
        for g in cat_groups:
            for j in range(g.declared_arity):
                levels = config.benchmark_levels[j] if j < len(config.benchmark_levels) else 10
                pref = arch.benchmarks[cat_groups.index(g)][j]
                if c in masked:
                    value = None
                elif rng.random() < config.benchmark_noise:
                    value = level_name(g.name, j, int(rng.integers(levels)))
                elif pref is None:
                    value = None
                else:
                    value = level_name(g.name, j, int(rng.choice(pref)))
                categorical[i, k] = value
                k += 1
        name = names[c]
        fund_types.append("MM" if "Money Market" in name else type_names[rng.choice(3, p=type_p)])

    return FundUniverse(
        schema=schema,
        columns=columns,
        fund_ids=[f"F{i + 1:06d}" for i in range(config.n_funds)],
        fund_types=fund_types,
        categories=[names[c] for c in labels],
        numeric=numeric,
        categorical=categorical,
    )


def archetype_values(config: GeneratorConfig, category: int) -> np.ndarray:
    """Rounded archetype numeric vector of ``category`` in column order (testing aid)."""
    arch = _archetypes(config)[category]
    parts = []
    for g in config.schema:
        if g.kind == PERCENTAGE:
            parts.append(_cap_sum(arch.comps[g.name]))
        elif g.kind == COUNT:
            parts.append(np.round(arch.holdings[g.name]))
    return np.concatenate(parts)


def parse_confusable(specs: Sequence[str], n_categories: int) -> tuple[tuple[int, int], ...]:
    """Parse ``A:B`` pairs given as category indices or default category names."""
    names = category_names(n_categories)
    pairs = []
    for spec in specs:
        parts = spec.split(":")
        if len(parts) != 2:
            raise ValueError(f"confusable pair {spec!r} must look like A:B")
        idx = []
        for p in parts:
            p = p.strip()
            if p.isdigit():
                idx.append(int(p))
            elif p in names:
                idx.append(names.index(p))
            else:
                raise ValueError(f"unknown category {p!r} in confusable pair")
        pairs.append(tuple(idx))
    return tuple(pairs)
