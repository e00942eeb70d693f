import datetime as dt

import numpy as np
import pytest

from demandcast.data import SalesRecord, SalesTable, sort_chronological
from demandcast.features import FeatureMatrix


def make_matrix(X, y, dates=None, store="1", item="1", columns=None) -> FeatureMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if dates is None:
        dates = np.arange(n, dtype=np.int64) + dt.date(2015, 1, 1).toordinal()
    return FeatureMatrix(
        columns=columns or [f"f{j}" for j in range(X.shape[1])],
        rows=X,
        target=y,
        dates=np.asarray(dates, dtype=np.int64),
        stores=np.full(n, store, dtype=np.str_),
        items=np.full(n, item, dtype=np.str_),
    )


def make_table(rows) -> SalesTable:
    """rows: iterable of (date, store, item, qty)."""
    records = [
        SalesRecord(date=d, store_id=s, item_id=i, quantity=float(q))
        for d, s, i, q in rows
    ]
    return sort_chronological(SalesTable.from_records(records))


@pytest.fixture
def day():
    def _day(offset, start=dt.date(2015, 1, 1)):
        return start + dt.timedelta(days=offset)

    return _day
