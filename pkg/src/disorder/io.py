"""Writers for tables and JSON documents produced by the CLI and experiments."""

import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

PathLike = Union[str, Path]


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(document: Any, target: Optional[PathLike] = None) -> None:
    """Write ``document`` to ``target``, or stdout when no target is given."""
    text = dumps(document)
    if target is None:
        sys.stdout.write(text)
        return
    Path(target).write_text(text)


def table_text(header: Sequence[str], table: np.ndarray) -> str:
    rows = [",".join(header)]
    for row in np.atleast_2d(table):
        rows.append(",".join(f"{float(v):.17g}" for v in row))
    return "\n".join(rows) + "\n"


def write_table(header: Sequence[str], table: np.ndarray, target: Optional[PathLike] = None) -> None:
    text = table_text(header, table)
    if target is None:
        sys.stdout.write(text)
        return
    Path(target).write_text(text)


def sibling(target: PathLike, suffix: str) -> Path:
    """``out.csv`` -> ``out.<suffix>.csv`` for side outputs such as boundaries."""
    path = Path(target)
    return path.with_name(f"{path.stem}.{suffix}{path.suffix or '.csv'}")
