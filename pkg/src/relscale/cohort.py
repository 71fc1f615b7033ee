"""Labeled patient cohorts from raw (date, billing code) event streams.

Events in the feature window become per-patient code counts; events in
the later outcome window define the label.  A patient with any outcome
code before the outcome window is excluded so that the label reflects
new onset, not ongoing treatment.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, field
from typing import Optional

from .codebook import Codebook, CodeSystem
from .errors import EmptyCohortError, FormatError

RECORDS_HEADER = ["patient_id", "sex", "birth_year", "date", "system", "code"]


@dataclass(frozen=True)
class BillingRecord:
    patient_id: str
    sex: str
    birth_year: int
    date: datetime.date
    system: CodeSystem
    code: str


@dataclass
class CohortSpec:
    """Windows, outcome definition and demographic filters."""

    feature_window: tuple[datetime.date, datetime.date]
    outcome_window: tuple[datetime.date, datetime.date]
    outcome_codes: set[tuple[CodeSystem, str]]
    occurrence_threshold: int = 3
    expand_descendants: bool = True
    age_range: Optional[tuple[int, int]] = None
    sex: Optional[str] = None

    def __post_init__(self):
        fs, fe = self.feature_window
        os_, oe = self.outcome_window
        if not (fs < fe and os_ < oe):
            raise ValueError("windows must be nonempty [start, end) intervals")
        if fe > os_:
            raise ValueError("feature window must precede the outcome window")
        if self.occurrence_threshold < 1:
            raise ValueError("occurrence threshold must be >= 1")
        if self.sex is not None and self.sex not in ("F", "M"):
            raise ValueError(f"sex filter must be 'F' or 'M', got {self.sex!r}")

    @property
    def reference_year(self) -> int:
        """Year ages are computed at: the outcome window start."""
        return self.outcome_window[0].year


@dataclass
class CohortMember:
    patient_id: str
    age: int
    label: int


@dataclass
class LabeledCohort:
    """Included patients with counts, plus who was removed and why."""

    members: list[CohortMember]
    counts: list[dict[tuple[CodeSystem, str], int]]
    excluded: dict[str, str] = field(default_factory=dict)
    filtered: dict[str, str] = field(default_factory=dict)

    def labels(self) -> list[int]:
        return [m.label for m in self.members]


def load_records(path) -> list[BillingRecord]:
    """Parse the records CSV, preserving file order."""
    records: list[BillingRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", path=path, line=1)
        if header != RECORDS_HEADER:
            raise FormatError(
                f"expected header {','.join(RECORDS_HEADER)}", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise FormatError(f"expected 6 fields, got {len(row)}",
                                  path=path, line=lineno)
            pid, sex, birth_year, date_text, system_text, code = row
            if sex not in ("F", "M"):
                raise FormatError(f"sex must be F or M, got {sex!r}",
                                  path=path, line=lineno)
            try:
                year = int(birth_year)
            except ValueError:
                raise FormatError(f"bad birth year {birth_year!r}",
                                  path=path, line=lineno)
            try:
                date = datetime.date.fromisoformat(date_text)
            except ValueError:
                raise FormatError(f"bad date {date_text!r}", path=path, line=lineno)
            try:
                system = CodeSystem.parse(system_text)
            except ValueError as exc:
                raise FormatError(str(exc), path=path, line=lineno)
            if not code:
                raise FormatError("empty code", path=path, line=lineno)
            records.append(BillingRecord(pid, sex, year, date, system, code))
    return records


def _expand_outcome_codes(spec: CohortSpec,
                          codebook: Optional[Codebook]) -> set[tuple[CodeSystem, str]]:
    codes = set(spec.outcome_codes)
    if spec.expand_descendants:
        if codebook is None:
            raise ValueError(
                "descendant expansion requires a codebook; pass one or set "
                "expand_descendants=False")
        for system, code in spec.outcome_codes:
            for child in codebook.descendants(system, code):
                codes.add((system, child))
    return codes


def build_cohort(records: list[BillingRecord], spec: CohortSpec,
                 codebook: Optional[Codebook] = None) -> LabeledCohort:
    """Label and filter patients.

    label = 1 iff the patient has at least ``occurrence_threshold``
    outcome-code events inside the outcome window.  Windows are
    half-open [start, end): a boundary-date event belongs to the later
    window.  Output ordering is canonical (sorted by patient id), so the
    result does not depend on record order.
    """
    outcome_codes = _expand_outcome_codes(spec, codebook)
    fs, fe = spec.feature_window
    os_, oe = spec.outcome_window

    by_patient: dict[str, dict] = {}
    for rec in records:
        info = by_patient.setdefault(
            rec.patient_id,
            {"sex": rec.sex, "birth_year": rec.birth_year,
             "counts": {}, "outcome_events": 0, "prior_outcome": False})
        key = (rec.system, rec.code)
        if fs <= rec.date < fe:
            if key in outcome_codes:
                info["prior_outcome"] = True
            else:
                info["counts"][key] = info["counts"].get(key, 0) + 1
        elif os_ <= rec.date < oe:
            if key in outcome_codes:
                info["outcome_events"] += 1

    members: list[CohortMember] = []
    counts: list[dict[tuple[CodeSystem, str], int]] = []
    excluded: dict[str, str] = {}
    filtered: dict[str, str] = {}
    for pid in sorted(by_patient):
        info = by_patient[pid]
        age = spec.reference_year - info["birth_year"]
        if spec.sex is not None and info["sex"] != spec.sex:
            filtered[pid] = "sex"
            continue
        if spec.age_range is not None:
            lo, hi = spec.age_range
            if not lo <= age <= hi:
                filtered[pid] = "age"
                continue
        if info["prior_outcome"]:
            excluded[pid] = "prior outcome code"
            continue
        label = 1 if info["outcome_events"] >= spec.occurrence_threshold else 0
        members.append(CohortMember(patient_id=pid, age=age, label=label))
        counts.append(info["counts"])

    if not members:
        raise EmptyCohortError("no patients remain after cohort filters")
    return LabeledCohort(members=members, counts=counts,
                         excluded=excluded, filtered=filtered)


def cohort_summary(cohort: LabeledCohort) -> tuple[int, int, float]:
    """(N, positives, prevalence) for a cohort."""
    n_total = len(cohort.members)
    n_pos = sum(m.label for m in cohort.members)
    return n_total, n_pos, n_pos / n_total


def write_records_csv(records, path) -> None:
    """Write billing records in the documented CSV format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORDS_HEADER)
        for rec in records:
            writer.writerow([rec.patient_id, rec.sex, rec.birth_year,
                             rec.date.isoformat(), rec.system.value, rec.code])
