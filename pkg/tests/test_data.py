import datetime as dt
import io

import numpy as np
import pytest

from demandcast.data import (
    FillMethod,
    Granularity,
    SalesRecord,
    SalesTable,
    SplitSpec,
    aggregate,
    fill_gaps,
    parse_sales_csv,
    sort_chronological,
    split_temporal,
    write_sales_csv,
)
from demandcast.errors import (
    DuplicateDateError,
    EmptyInputError,
    EmptyPartitionError,
    MalformedInputError,
)

from conftest import make_table


def test_parse_single_row():
    res = parse_sales_csv(b"date,store,item,sales\n2013-01-01,1,1,13\n")
    assert len(res.table) == 1
    assert res.table.coverage == (dt.date(2013, 1, 1), dt.date(2013, 1, 1))
    rec = next(res.table.records())
    assert (rec.store_id, rec.item_id, rec.quantity) == ("1", "1", 13.0)
    assert res.malformed == []


def test_parse_rejects_negative_quantity_row():
    good_days = [
        (dt.date(2013, 1, 3) + dt.timedelta(days=k)).isoformat() for k in range(100)
    ]
    res = parse_sales_csv(
        b"date,store,item,sales\n"
        b"2013-01-01,1,1,5\n"
        b"2013-01-02,1,1,-3\n"
        + b"".join(f"{d},1,1,4\n".encode() for d in good_days)
    )
    assert len(res.table) == 101
    assert len(res.malformed) == 1
    assert res.malformed[0].line == 3
    assert "negative" in res.malformed[0].reason


def test_parse_aborts_when_malformed_fraction_exceeds_threshold():
    with pytest.raises(MalformedInputError) as exc:
        parse_sales_csv(
            b"date,store,item,sales\n"
            b"2013-01-01,1,1,5\n"
            b"not-a-date,1,1,5\n"
        )
    assert len(exc.value.malformed) == 1


def test_parse_empty_input():
    with pytest.raises(EmptyInputError):
        parse_sales_csv(b"date,store,item,sales\n")


def test_parse_missing_column():
    with pytest.raises(MalformedInputError):
        parse_sales_csv(b"date,shop,item,sales\n2013-01-01,1,1,5\n")


def test_parse_schema_remap_and_extras():
    res = parse_sales_csv(
        b"day,s,i,qty,promo\n2013-01-01,1,1,5,0.5\n",
        schema={"date": "day", "store": "s", "item": "i", "sales": "qty"},
        extra_columns=("promo",),
    )
    assert len(res.table) == 1
    assert res.table.extras["promo"][0] == 0.5


def test_sort_orders_by_date():
    t = SalesTable.from_records(
        [
            SalesRecord(dt.date(2013, 1, 2), "1", "1", 2.0),
            SalesRecord(dt.date(2013, 1, 1), "1", "1", 1.0),
        ]
    )
    out = sort_chronological(t)
    assert list(out.quantities) == [1.0, 2.0]


def test_sort_idempotent():
    t = make_table([(dt.date(2013, 1, 1 + i), "1", "1", i) for i in range(5)])
    again = sort_chronological(t)
    assert np.array_equal(again.dates, t.dates)
    assert np.array_equal(again.quantities, t.quantities)


def test_sort_groups_interleaved_series_matches_reference_sort():
    rng = np.random.default_rng(7)
    rows = []
    for store in ("1", "2"):
        for item in ("1", "2"):
            for d in range(10):
                rows.append((dt.date(2013, 1, 1 + d), store, item, float(rng.integers(0, 50))))
    rng.shuffle(rows)
    t = sort_chronological(
        SalesTable.from_records(SalesRecord(d, s, i, q) for d, s, i, q in rows)
    )
    expected = sorted(rows, key=lambda r: (r[1], r[2], r[0]))
    got = [(r.date, r.store_id, r.item_id, r.quantity) for r in t.records()]
    assert got == [(d, s, i, q) for d, s, i, q in expected]


def test_sort_raises_on_duplicate_date():
    t = SalesTable.from_records(
        [
            SalesRecord(dt.date(2013, 1, 1), "1", "1", 1.0),
            SalesRecord(dt.date(2013, 1, 1), "1", "1", 2.0),
        ]
    )
    with pytest.raises(DuplicateDateError):
        sort_chronological(t)


def test_fill_gaps_linear_interpolation():
    t = make_table(
        [(dt.date(2013, 1, 1), "1", "1", 10.0), (dt.date(2013, 1, 3), "1", "1", 20.0)]
    )
    filled, report = fill_gaps(t, FillMethod.LINEAR_INTERPOLATE)
    assert list(filled.quantities) == [10.0, 15.0, 20.0]
    assert list(filled.imputed) == [False, True, False]
    assert report.total_imputed == 1


def test_fill_gaps_forward_fill():
    t = make_table(
        [(dt.date(2013, 1, 1), "1", "1", 10.0), (dt.date(2013, 1, 3), "1", "1", 20.0)]
    )
    filled, _ = fill_gaps(t, FillMethod.FORWARD_FILL)
    assert list(filled.quantities) == [10.0, 10.0, 20.0]


def test_fill_gaps_linear_run_formula():
    # k missing days between a and b get a + j*(b-a)/(k+1)
    t = make_table(
        [(dt.date(2013, 1, 1), "1", "1", 10.0), (dt.date(2013, 1, 5), "1", "1", 22.0)]
    )
    filled, _ = fill_gaps(t)
    assert np.allclose(filled.quantities, [10.0, 13.0, 16.0, 19.0, 22.0])


def test_fill_gaps_gapless_unchanged_and_idempotent():
    t = make_table([(dt.date(2013, 1, 1 + i), "1", "1", float(i)) for i in range(6)])
    filled, report = fill_gaps(t)
    assert report.total_imputed == 0
    assert np.array_equal(filled.quantities, t.quantities)
    twice, report2 = fill_gaps(filled)
    assert report2.total_imputed == 0
    assert np.array_equal(twice.quantities, filled.quantities)
    assert np.array_equal(twice.imputed, filled.imputed)


def test_fill_gaps_interpolation_bounded_by_anchors():
    rng = np.random.default_rng(3)
    days = sorted(rng.choice(60, size=12, replace=False))
    vals = rng.uniform(0, 100, size=12)
    t = make_table(
        [(dt.date(2013, 1, 1) + dt.timedelta(days=int(d)), "1", "1", v) for d, v in zip(days, vals)]
    )
    filled, _ = fill_gaps(t)
    anchors = dict(zip(days, vals))
    day_list = sorted(anchors)
    for rec in filled.records():
        off = (rec.date - dt.date(2013, 1, 1)).days
        if off in anchors:
            continue
        prev = max(d for d in day_list if d < off)
        nxt = min(d for d in day_list if d > off)
        lo, hi = sorted((anchors[prev], anchors[nxt]))
        assert lo - 1e-9 <= rec.quantity <= hi + 1e-9


def test_fill_gaps_reports_leading_gap_when_aligning():
    t = make_table(
        [
            (dt.date(2013, 1, 1), "1", "1", 5.0),
            (dt.date(2013, 1, 4), "1", "1", 5.0),
            (dt.date(2013, 1, 3), "1", "2", 7.0),
            (dt.date(2013, 1, 4), "1", "2", 7.0),
        ]
    )
    filled, report = fill_gaps(t, align_to_coverage=True)
    assert report.leading_gaps == {("1", "2"): 2}
    # the late series is not back-filled before its first observation
    assert filled.series_rows(("1", "2"))[1] - filled.series_rows(("1", "2"))[0] == 2


def test_aggregate_sums_across_series():
    t = make_table(
        [
            (dt.date(2013, 1, 1), "1", "1", 5.0),
            (dt.date(2013, 1, 2), "1", "1", 7.0),
            (dt.date(2013, 1, 1), "1", "2", 3.0),
            (dt.date(2013, 1, 2), "1", "2", 1.0),
        ]
    )
    agg = aggregate(t, Granularity.AGGREGATE)
    assert list(agg.quantities) == [8.0, 8.0]
    assert set(agg.store_ids) == {"ALL"}


def test_aggregate_per_series_is_identity():
    t = make_table([(dt.date(2013, 1, 1 + i), "1", "1", float(i)) for i in range(4)])
    assert aggregate(t, Granularity.PER_SERIES) is t


def test_aggregate_preserves_total_mass_and_day_count():
    rng = np.random.default_rng(11)
    rows = []
    for store in ("1", "2", "3"):
        for d in range(40):
            rows.append((dt.date(2013, 1, 1) + dt.timedelta(days=d), store, "1", float(rng.uniform(0, 20))))
    t = make_table(rows)
    agg = aggregate(t, Granularity.AGGREGATE)
    assert len(agg) == 40
    assert np.isclose(agg.quantities.sum(), t.quantities.sum())


def test_split_partition_property():
    t = make_table([(dt.date(2013, 1, 1 + i), "1", "1", float(i)) for i in range(10)])
    spec = SplitSpec(dt.date(2013, 1, 5), dt.date(2013, 1, 6), dt.date(2013, 1, 10))
    train, test = split_temporal(t, spec)
    assert len(train) + len(test) == len(t)
    assert train.dates.max() < test.dates.min()


def test_split_last_day_only():
    t = make_table([(dt.date(2013, 1, 1 + i), "1", "1", float(i)) for i in range(10)])
    spec = SplitSpec(dt.date(2013, 1, 9), dt.date(2013, 1, 10), dt.date(2013, 1, 10))
    train, test = split_temporal(t, spec)
    assert len(test) == 1
    assert test.dates[0] == dt.date(2013, 1, 10).toordinal()


def test_split_empty_partition_raises():
    t = make_table([(dt.date(2013, 1, 2), "1", "1", 1.0)])
    spec = SplitSpec(dt.date(2013, 1, 5), dt.date(2013, 1, 6), dt.date(2013, 1, 7))
    with pytest.raises(EmptyPartitionError):
        split_temporal(t, spec)


def test_split_spec_validates_ordering():
    with pytest.raises(ValueError):
        SplitSpec(dt.date(2013, 1, 5), dt.date(2013, 1, 5), dt.date(2013, 1, 7))


def test_cleaned_csv_roundtrip(tmp_path):
    t = make_table(
        [(dt.date(2013, 1, 1), "1", "1", 10.0), (dt.date(2013, 1, 3), "1", "1", 20.0)]
    )
    filled, _ = fill_gaps(t)
    path = tmp_path / "cleaned.csv"
    write_sales_csv(filled, path)
    text = path.read_text()
    assert text.splitlines()[0] == "date,store,item,sales,imputed"
    res = parse_sales_csv(path)
    assert len(res.table) == 3
    assert np.allclose(sort_chronological(res.table).quantities, filled.quantities)
