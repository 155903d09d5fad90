import pathlib

import pytest

import chainsim
import reference


@pytest.fixture(scope="session")
def fixture_chain():
    return chainsim.build_fixture()


@pytest.fixture(scope="session")
def ref_graph(fixture_chain):
    return reference.build(fixture_chain.truth)


@pytest.fixture(scope="session")
def run_dir(fixture_chain, tmp_path_factory) -> pathlib.Path:
    """Fixture chain fully processed once; many tests read the outputs."""
    from chainforge.pipeline import Pipeline

    root = tmp_path_factory.mktemp("fixture-run")
    blocks = root / "blocks"
    blocks.mkdir()
    (blocks / "blk00000.dat").write_bytes(fixture_chain.file_bytes)
    (root / "rates.csv").write_text(rates_csv_text(fixture_chain))
    (root / "patterns.csv").write_text(
        "substring,entity\n"
        + "".join(f"{s},{e}\n" for s, e in fixture_chain.patterns))
    (root / "run.toml").write_text(
        '[run]\nout = "out"\n'
        '[parse]\nblocks_dir = "blocks"\n'
        '[labels]\npatterns = "patterns.csv"\n'
        '[features]\nrates = "rates.csv"\n'
        '[export]\nsql = true\n'
        '[sample]\ncopies = 3\n')
    Pipeline(root / "run.toml").run_all()
    return root / "out"


def rates_csv_text(fx) -> str:
    import datetime

    days = sorted({datetime.datetime.fromtimestamp(
        t, tz=datetime.timezone.utc).date() for t in fx.block_times})
    lines = ["date,usd_per_btc"]
    for i, d in enumerate(days):
        lines.append(f"{d.isoformat()},{10_000 + 250 * i}")
    return "\n".join(lines) + "\n"
