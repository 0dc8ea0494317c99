import pytest

from btcgoogle.ingest import aggregate, format_transactions, partner_histograms, powerlaw_fit
from btcgoogle.netgen import ConfigError, GeneratorConfig, generate


@pytest.fixture(scope="module")
def seed1():
    cfg = GeneratorConfig(seed=1, target_nodes=1000, target_link_ratio=2.5)
    return cfg, generate(cfg)


def test_size_and_ratio(seed1):
    _, rows = seed1
    snap = aggregate(rows)
    assert abs(snap.N - 1000) <= 100
    assert abs(snap.n_links / snap.N - 2.5) <= 0.5


def test_deterministic(seed1):
    cfg, rows = seed1
    assert format_transactions(generate(cfg)) == format_transactions(rows)
    assert format_transactions(generate(GeneratorConfig(seed=2, target_nodes=1000))) != format_transactions(rows)


def test_out_degree_exponent(seed1):
    _, rows = seed1
    out_p, in_p = partner_histograms(aggregate(rows))
    for h in (out_p, in_p):
        beta, _ = powerlaw_fit(h, (1, 30))
        assert 1.6 <= beta <= 2.4


def test_ranges(seed1):
    cfg, rows = seed1
    lo, hi = cfg.time_span
    assert all(r.amount > 0 and lo <= r.time <= hi for r in rows)


@pytest.mark.parametrize(
    "kwargs",
    [dict(target_nodes=1), dict(target_link_ratio=0.5), dict(degree_exponent=1.0)],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        generate(GeneratorConfig(**kwargs))
