"""
Cast vote record (CVR) files.

Header: voter_id,m1,...,mN,<race ids...>
Measures are 0, 1 or NA; race choices are D, R, O (other), A (abstain) or NA
(race not on the ballot). Comma separated, UTF-8, LF or CRLF line endings.
A frame read from a file remembers its line ending and is written back with it;
new frames are written with LF.

In memory a CVR is a pandas DataFrame of strings in exactly that layout.
"""
import csv
import os
import re
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from electorate_lab.exceptions import CVRParseError, CVRSchemaError

VOTER_ID = "voter_id"
MISSING = "NA"
ABSTAIN = "A"
MEASURE_VALUES = ("0", "1", MISSING)
CHOICE_VALUES = ("D", "R", "O", ABSTAIN, MISSING)
# frame.attrs key holding the line ending of the file a frame was read from
LINE_TERMINATOR = "lineterminator"

_MEASURE_COLUMN = re.compile(r"^m([1-9][0-9]*)$")
# lookup from int8 response codes (-1, 0, 1) to CVR text
_MEASURE_TEXT = np.array([MISSING, "0", "1"], dtype=object)


@dataclass(frozen=True)
class BallotRecord:
    voter_id: str
    measures: t.Tuple[t.Optional[int], ...]
    choices: t.Dict[str, t.Optional[str]] = field(default_factory=dict)


def is_measure_column(name: str) -> bool:
    return _MEASURE_COLUMN.match(name) is not None


def measure_columns(n_measures: int) -> t.List[str]:
    return [f"m{i}" for i in range(1, n_measures + 1)]


def split_header(columns: t.Sequence[str]) -> t.Tuple[t.List[str], t.List[str]]:
    """
    Split a CVR header into its measure columns and race ids.
    """
    columns = list(columns)
    if not columns or columns[0] != VOTER_ID:
        raise CVRSchemaError(f"header must start with {VOTER_ID!r}")
    if len(set(columns)) != len(columns):
        raise CVRSchemaError("duplicate column names in header")

    measures = []
    for name in columns[1:]:
        if not is_measure_column(name):
            break
        measures.append(name)
    races = columns[1 + len(measures):]

    if not measures:
        raise CVRSchemaError("header declares no measure columns")
    if measures != measure_columns(len(measures)):
        raise CVRSchemaError(f"measure columns must be m1..m{len(measures)}, got {measures}")
    stray = [r for r in races if is_measure_column(r)]
    if stray:
        raise CVRSchemaError(f"measure columns after race columns: {stray}")
    return measures, races


def race_ids(frame: pd.DataFrame) -> t.List[str]:
    return split_header(frame.columns)[1]


def n_measures(frame: pd.DataFrame) -> int:
    return len(split_header(frame.columns)[0])


def build_frame(
    voter_ids: t.Sequence[t.Any],
    measures: np.ndarray,
    choices: t.Mapping[str, t.Sequence[str]],
) -> pd.DataFrame:
    """
    Assemble a CVR table from voter ids, an int8 response matrix (-1 = missing)
    and one choice column per race.
    """
    measures = np.asarray(measures)
    data = {VOTER_ID: np.asarray(voter_ids).astype(str).astype(object)}
    for j, name in enumerate(measure_columns(measures.shape[1])):
        data[name] = _MEASURE_TEXT[measures[:, j].astype(np.int64) + 1]
    for race_id, column in choices.items():
        data[race_id] = np.asarray(column).astype(object)
    frame = pd.DataFrame(data)
    split_header(frame.columns)
    return frame


def measure_matrix(frame: pd.DataFrame) -> np.ndarray:
    """Response matrix of a CVR table as int8, with -1 for NA."""
    columns, _ = split_header(frame.columns)
    values = frame[columns].to_numpy(dtype=object)
    matrix = np.full(values.shape, -1, dtype=np.int8)
    matrix[values == "0"] = 0
    matrix[values == "1"] = 1
    return matrix


def _first_bad_line(mask: pd.DataFrame) -> t.Tuple[int, str]:
    rows = np.flatnonzero(mask.to_numpy().any(axis=1))
    row = int(rows[0])
    column = mask.columns[np.flatnonzero(mask.iloc[row].to_numpy())[0]]
    # header is line 1
    return row + 2, column


def validate_frame(frame: pd.DataFrame, expected_measures: t.Optional[int] = None) -> None:
    measures, races = split_header(frame.columns)
    if expected_measures is not None and len(measures) != expected_measures:
        raise CVRSchemaError(f"header declares {len(measures)} measures, expected {expected_measures}")

    missing = frame.isna() | (frame == "")
    if missing.to_numpy().any():
        line, column = _first_bad_line(missing)
        raise CVRParseError(f"missing value in column {column!r}", line=line)

    bad = ~frame[measures].isin(MEASURE_VALUES)
    if bad.to_numpy().any():
        line, column = _first_bad_line(bad)
        raise CVRParseError(f"measure {column} must be one of {MEASURE_VALUES}", line=line)

    if races:
        bad = ~frame[races].isin(CHOICE_VALUES)
        if bad.to_numpy().any():
            line, column = _first_bad_line(bad)
            raise CVRParseError(f"choice in race {column!r} must be one of {CHOICE_VALUES}", line=line)


def read_cvr(path: t.Union[str, os.PathLike], expected_measures: t.Optional[int] = None) -> pd.DataFrame:
    """
    Read and validate a CVR file.
    """
    with open(path, "r", newline="", encoding="utf-8") as fp:
        terminator = "\r\n" if fp.readline().endswith("\r\n") else "\n"
        fp.seek(0)
        reader = csv.reader(fp)
        header = next(reader, None)
        if header is None:
            raise CVRSchemaError(f"{path}: file has no header")
        split_header(header)

        rows = []
        for row in reader:
            if len(row) != len(header):
                raise CVRParseError(f"expected {len(header)} fields, saw {len(row)}", line=reader.line_num)
            rows.append(row)

    frame = pd.DataFrame(rows, columns=header, dtype=object)
    validate_frame(frame, expected_measures)
    frame.attrs[LINE_TERMINATOR] = terminator
    return frame


def write_cvr(
    frame: pd.DataFrame,
    path: t.Union[str, os.PathLike],
    lineterminator: t.Optional[str] = None,
) -> None:
    validate_frame(frame)
    if lineterminator is None:
        lineterminator = frame.attrs.get(LINE_TERMINATOR, "\n")
    if lineterminator not in ("\n", "\r\n"):
        raise CVRSchemaError(f"unsupported line terminator {lineterminator!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(Path(path), index=False, lineterminator=lineterminator, encoding="utf-8")


def records_from_frame(frame: pd.DataFrame) -> t.Iterator[BallotRecord]:
    measures, races = split_header(frame.columns)
    for row in frame.itertuples(index=False, name=None):
        values = dict(zip(frame.columns, row))
        yield BallotRecord(
            voter_id=values[VOTER_ID],
            measures=tuple(None if values[m] == MISSING else int(values[m]) for m in measures),
            choices={r: None if values[r] == MISSING else values[r] for r in races},
        )


def frame_from_records(
    records: t.Iterable[BallotRecord],
    races: t.Optional[t.Sequence[str]] = None,
    n_measures: t.Optional[int] = None,
) -> pd.DataFrame:
    """
    Build a CVR table from records. Races default to the first record's races;
    a record naming an undeclared race is rejected.
    """
    records = list(records)
    if n_measures is None:
        n_measures = len(records[0].measures) if records else 1
    if races is None:
        races = list(records[0].choices) if records else []
    declared = set(races)

    rows = []
    for record in records:
        if len(record.measures) != n_measures:
            raise CVRSchemaError(f"voter {record.voter_id}: {len(record.measures)} measures, expected {n_measures}")
        undeclared = set(record.choices) - declared
        if undeclared:
            raise CVRSchemaError(f"voter {record.voter_id}: undeclared race(s) {sorted(undeclared)}")
        row = [str(record.voter_id)]
        row += [MISSING if d is None else str(int(d)) for d in record.measures]
        row += [record.choices.get(r) or MISSING for r in races]
        rows.append(row)

    columns = [VOTER_ID] + measure_columns(n_measures) + list(races)
    frame = pd.DataFrame(rows, columns=columns, dtype=object)
    validate_frame(frame)
    return frame
