"""Core domain types, CSV schemas, and reference-data resolution.

All types are immutable after validation and safe to share across workers.
Time keys are ``(year, month)`` tuples with month in 1..12; nothing in the
pipeline has day or timezone resolution.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from agricaf.errors import ConfigurationError, DataValidationError, ParseError

SUPPLY_KINDS = ("production", "yield", "stocks")
SUPPLY_UNITS = {"production": "tonnes/year", "yield": "hg/ha", "stocks": "1000 mt/year"}
LEVELS = ("country", "region")

# geo code in calendar.csv that supplies the per-commodity default start month
DEFAULT_GEO = "*"


@dataclass(frozen=True)
class MonthlyPriceSeries:
    """Nominal prices, price index, and deflated prices for one commodity.

    Coverage gaps are simply absent keys; they are never interpolated.
    ``deflated`` is empty until populated by :func:`agricaf.transform.deflate`.
    """

    commodity: str
    nominal: dict[tuple[int, int], float]
    index: dict[tuple[int, int], float]
    deflated: dict[tuple[int, int], float] = field(default_factory=dict)

    def coverage_gaps(self) -> list[tuple[int, int]]:
        """Missing (year, month) keys strictly inside the nominal coverage span."""
        if not self.nominal:
            return []
        keys = sorted(self.nominal)
        lo = keys[0][0] * 12 + keys[0][1] - 1
        hi = keys[-1][0] * 12 + keys[-1][1] - 1
        have = {y * 12 + m - 1 for y, m in keys}
        return [(i // 12, i % 12 + 1) for i in range(lo, hi + 1) if i not in have]


@dataclass(frozen=True)
class AnnualSupplySeries:
    """Production, yield, or beginning-stocks values for one geography."""

    commodity: str
    kind: str
    geo: str
    level: str
    values: dict[int, float]

    def total(self) -> float:
        return float(sum(self.values.values()))


@dataclass(frozen=True)
class GeographyMap:
    """Country-to-region mapping with validity year ranges.

    Historical entities map into present-day regions; the mapping must be
    unambiguous: at most one active entry per (country, year).
    """

    entries: tuple[tuple[str, str, int, int], ...]

    def resolve(self, country: str, year: int) -> str:
        hits = [r for c, r, lo, hi in self.entries if c == country and lo <= year <= hi]
        if len(hits) == 1:
            return hits[0]
        if not hits:
            raise DataValidationError(f"no region mapping for country {country!r} in {year}")
        raise DataValidationError(f"ambiguous region mapping for {country!r} in {year}: {hits}")

    def countries(self) -> set[str]:
        return {c for c, _, _, _ in self.entries}

    def regions(self) -> set[str]:
        return {r for _, r, _, _ in self.entries}

    def ambiguous_pairs(self) -> list[tuple[str, int]]:
        bad = []
        for country in self.countries():
            spans = [(lo, hi) for c, _, lo, hi in self.entries if c == country]
            for i, (lo1, hi1) in enumerate(spans):
                for lo2, hi2 in spans[i + 1 :]:
                    if lo1 <= hi2 and lo2 <= hi1:
                        bad.append((country, max(lo1, lo2)))
        return bad


@dataclass(frozen=True)
class TradeCalendar:
    """Marketing-year start month per (commodity, geography).

    The geo code ``*`` holds the per-commodity default that geographies
    without an explicit row inherit.
    """

    entries: dict[tuple[str, str], int]

    def start_month(self, commodity: str, geo: str) -> int:
        if (commodity, geo) in self.entries:
            return self.entries[(commodity, geo)]
        if (commodity, DEFAULT_GEO) in self.entries:
            return self.entries[(commodity, DEFAULT_GEO)]
        raise ConfigurationError(f"no marketing-year calendar for ({commodity!r}, {geo!r}) and no default")

    def has_entry(self, commodity: str, geo: str) -> bool:
        return (commodity, geo) in self.entries or (commodity, DEFAULT_GEO) in self.entries


@dataclass(frozen=True)
class RelativeChangeSeries:
    """Fractional year-on-year changes (0.49 means +49%).

    ``values`` keys are (year, month) for the price kinds, plain year for
    supply kinds. Entries are always finite; incomputable points are absent.
    """

    kind: str
    values: dict

    KINDS = ("price", "supply-annual", "price-lagged")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DataValidationError(f"unknown change-series kind {self.kind!r}")


@dataclass(frozen=True)
class Violation:
    severity: str  # "hard" | "warning"
    message: str
    location: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def hard(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.severity == "hard")

    @property
    def ok(self) -> bool:
        return not self.hard

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"severity": v.severity, "message": v.message, "location": v.location}
                for v in self.violations
            ],
        }


# ---------------------------------------------------------------------------
# CSV parsing. Header row required, UTF-8, '.' decimal. Parse errors carry
# the file/row/column; validation of cross-file invariants happens later in
# validate_dataset so a report can list every problem at once.

def _read_rows(path: str | Path, required: list[str]) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", str(path)) from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError("empty file, header row required", str(path))
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise ParseError(f"missing columns {missing}", str(path), row=1)
    rows = []
    for i, row in enumerate(reader, start=2):
        row["__row__"] = i
        rows.append(row)
    return rows


def _parse_int(row: dict, col: str, path: str) -> int:
    try:
        return int(row[col])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid integer {row.get(col)!r}", path, row["__row__"], col) from exc


def _parse_float(row: dict, col: str, path: str) -> float:
    try:
        return float(row[col])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid number {row.get(col)!r}", path, row["__row__"], col) from exc


def read_prices(path: str | Path) -> dict[str, MonthlyPriceSeries]:
    """Parse prices.csv (commodity,year,month,nominal_price,price_index)."""
    rows = _read_rows(path, ["commodity", "year", "month", "nominal_price", "price_index"])
    nominal: dict[str, dict] = {}
    index: dict[str, dict] = {}
    for row in rows:
        c = row["commodity"]
        y = _parse_int(row, "year", str(path))
        m = _parse_int(row, "month", str(path))
        if not 1 <= m <= 12:
            raise ParseError(f"month {m} outside 1..12", str(path), row["__row__"], "month")
        key = (y, m)
        cn = nominal.setdefault(c, {})
        if key in cn:
            raise ParseError(f"duplicate price row for {c} {key}", str(path), row["__row__"])
        cn[key] = _parse_float(row, "nominal_price", str(path))
        index.setdefault(c, {})[key] = _parse_float(row, "price_index", str(path))
    return {c: MonthlyPriceSeries(c, nominal[c], index[c]) for c in sorted(nominal)}


def read_supply(path: str | Path) -> list[AnnualSupplySeries]:
    """Parse supply.csv (commodity,kind,geo,level,year,value)."""
    rows = _read_rows(path, ["commodity", "kind", "geo", "level", "year", "value"])
    grouped: dict[tuple, dict[int, float]] = {}
    for row in rows:
        kind = row["kind"]
        if kind not in SUPPLY_KINDS:
            raise ParseError(f"unknown kind {kind!r}", str(path), row["__row__"], "kind")
        level = row["level"]
        if level not in LEVELS:
            raise ParseError(f"unknown level {level!r}", str(path), row["__row__"], "level")
        key = (row["commodity"], kind, row["geo"], level)
        y = _parse_int(row, "year", str(path))
        series = grouped.setdefault(key, {})
        if y in series:
            raise ParseError(f"duplicate supply row for {key} year {y}", str(path), row["__row__"])
        series[y] = _parse_float(row, "value", str(path))
    return [
        AnnualSupplySeries(c, k, g, lv, grouped[(c, k, g, lv)])
        for c, k, g, lv in sorted(grouped)
    ]


def read_regions(path: str | Path) -> GeographyMap:
    """Parse regions.csv (country,region,valid_from,valid_to)."""
    rows = _read_rows(path, ["country", "region", "valid_from", "valid_to"])
    entries = []
    for row in rows:
        entries.append(
            (
                row["country"],
                row["region"],
                _parse_int(row, "valid_from", str(path)),
                _parse_int(row, "valid_to", str(path)),
            )
        )
    return GeographyMap(tuple(entries))


def read_calendar(path: str | Path) -> TradeCalendar:
    """Parse calendar.csv (commodity,geo,my_start_month)."""
    rows = _read_rows(path, ["commodity", "geo", "my_start_month"])
    entries = {}
    for row in rows:
        m = _parse_int(row, "my_start_month", str(path))
        if not 1 <= m <= 12:
            raise ParseError(f"start month {m} outside 1..12", str(path), row["__row__"], "my_start_month")
        key = (row["commodity"], row["geo"])
        if key in entries:
            raise ParseError(f"duplicate calendar row for {key}", str(path), row["__row__"])
        entries[key] = m
    return TradeCalendar(entries)


def write_prices(path: str | Path, series: dict[str, MonthlyPriceSeries]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["commodity", "year", "month", "nominal_price", "price_index"])
    for c in sorted(series):
        s = series[c]
        for (y, m) in sorted(s.nominal):
            w.writerow([c, y, m, repr(s.nominal[(y, m)]), repr(s.index[(y, m)])])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_supply(path: str | Path, supplies: list[AnnualSupplySeries]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["commodity", "kind", "geo", "level", "year", "value"])
    for s in sorted(supplies, key=lambda s: (s.commodity, s.kind, s.geo, s.level)):
        for y in sorted(s.values):
            w.writerow([s.commodity, s.kind, s.geo, s.level, y, repr(s.values[y])])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_regions(path: str | Path, geo_map: GeographyMap) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["country", "region", "valid_from", "valid_to"])
    for entry in sorted(geo_map.entries):
        w.writerow(list(entry))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_calendar(path: str | Path, cal: TradeCalendar) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["commodity", "geo", "my_start_month"])
    for (c, g) in sorted(cal.entries):
        w.writerow([c, g, cal.entries[(c, g)]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# Validation

def validate_dataset(
    prices: MonthlyPriceSeries,
    supplies: list[AnnualSupplySeries],
    geo_map: GeographyMap,
    cal: TradeCalendar,
) -> ValidationReport:
    """Check every cross-type invariant; hard violations block the pipeline.

    Hard: non-positive price or index, month outside 1..12, country-level
    supply geography absent from the map, missing calendar entry, ambiguous
    geography mapping, negative supply quantities.
    Warnings: price coverage gaps (recorded, never imputed).
    """
    out: list[Violation] = []

    for (y, m), v in sorted(prices.nominal.items()):
        if not 1 <= m <= 12:
            out.append(Violation("hard", f"month {m} outside 1..12", f"prices {prices.commodity} ({y},{m})"))
        if not v > 0:
            out.append(Violation("hard", "non-positive price", f"prices {prices.commodity} ({y},{m})"))
    for (y, m), v in sorted(prices.index.items()):
        if not v > 0:
            out.append(Violation("hard", "non-positive price index", f"prices {prices.commodity} ({y},{m})"))
    for (y, m) in sorted(prices.deflated):
        if (y, m) not in prices.nominal or (y, m) not in prices.index:
            out.append(Violation("hard", "deflated value without nominal/index", f"prices {prices.commodity} ({y},{m})"))
    for gap in prices.coverage_gaps():
        out.append(Violation("warning", "price coverage gap", f"prices {prices.commodity} {gap}"))

    known_regions = geo_map.regions()
    for s in supplies:
        loc = f"supply {s.commodity}/{s.kind}/{s.geo}"
        for y, v in sorted(s.values.items()):
            if v < 0:
                out.append(Violation("hard", f"negative {s.kind} quantity {v}", f"{loc} year {y}"))
        if s.level == "country":
            if s.geo not in geo_map.countries():
                out.append(Violation("hard", f"unknown geography {s.geo!r} (not in region map)", loc))
        elif s.geo not in known_regions:
            out.append(Violation("warning", f"region {s.geo!r} not produced by the region map", loc))
        if not cal.has_entry(s.commodity, s.geo):
            out.append(Violation("hard", f"missing marketing-year calendar for {s.geo!r}", loc))

    for country, year in geo_map.ambiguous_pairs():
        out.append(Violation("hard", f"overlapping region mappings for {country!r} around {year}", "regions"))

    return ValidationReport(tuple(out))


def aggregate_to_regions(
    supplies: list[AnnualSupplySeries], geo_map: GeographyMap
) -> list[AnnualSupplySeries]:
    """Add region-level series derived from the country-level ones.

    Returns country series unchanged plus one region series per (commodity,
    kind, region). Production and stocks are extensive and sum; yield is
    intensive and is production-weighted (a country-year without production
    data contributes nothing to the region's yield that year). Input
    region-level series are kept as-is and shadow derived ones with the
    same (kind, geo).
    """
    provided = [s for s in supplies if s.level == "region"]
    provided_keys = {(s.commodity, s.kind, s.geo) for s in provided}
    by_key: dict[tuple[str, str], dict[str, dict[int, float]]] = {}
    for s in supplies:
        if s.level == "country":
            by_key.setdefault((s.commodity, s.kind), {})[s.geo] = s.values

    out = [s for s in supplies if s.level == "country"] + list(provided)
    for (commodity, kind), per_country in sorted(by_key.items()):
        prod = by_key.get((commodity, "production"), {})
        sums: dict[tuple[str, int], float] = {}
        weights: dict[tuple[str, int], float] = {}
        for geo in sorted(per_country):
            for y, v in per_country[geo].items():
                region = geo_map.resolve(geo, y)
                key = (region, y)
                if kind == "yield":
                    w = prod.get(geo, {}).get(y)
                    if w is None:
                        continue
                    sums[key] = sums.get(key, 0.0) + v * w
                    weights[key] = weights.get(key, 0.0) + w
                else:
                    sums[key] = sums.get(key, 0.0) + v
        regions: dict[str, dict[int, float]] = {}
        for (region, y), total in sorted(sums.items()):
            if kind == "yield":
                w = weights[(region, y)]
                if w <= 0:
                    continue
                regions.setdefault(region, {})[y] = total / w
            else:
                regions.setdefault(region, {})[y] = total
        for region in sorted(regions):
            if (commodity, kind, region) in provided_keys:
                continue
            out.append(AnnualSupplySeries(commodity, kind, region, "region", regions[region]))
    return sorted(out, key=lambda s: (s.commodity, s.kind, s.geo))
