import pytest

import survnet.cli as cli
from survnet.cli import EXIT_DATA, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, main, parse_availability
from survnet.errors import ProbabilityError
from survnet.services.catalog import CatalogService
from survnet.services.scenario_engine import load_database


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def fig1_path(data_dir):
    return str(data_dir / "fig1.net")


def _builddb(fig1_path, out):
    assert main(["builddb", fig1_path, "-o", str(out), "--threads", "1"]) == EXIT_OK


def test_report_fig1(workdir, fig1_path, capsys):
    assert main(["report", fig1_path]) == EXIT_OK
    assert capsys.readouterr().out == "M=10  2^M=1024  subs=2  sum=192  ratio=5.33\n"


def test_report_labeled_mode(workdir, fig1_path, capsys):
    assert main(["report", fig1_path, "--mode", "labeled"]) == EXIT_OK
    assert "subs=3  sum=256" in capsys.readouterr().out


def test_report_ship32(workdir, data_dir, capsys):
    assert main(["report", str(data_dir / "ship32.net")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "M=32  2^M=4294967296" in out
    assert "sum=1024" in out


def test_groups(workdir, fig1_path, data_dir, capsys):
    assert main(["groups", fig1_path]) == EXIT_OK
    assert "20: {64,76,81}" in capsys.readouterr().out.splitlines()
    assert main(["groups", str(data_dir / "twogroup.net"), "--export"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "group 1: sinks={1,2} gens={10,12}"
    assert out[-1] == "shared 12: groups={1,2}"


def test_transform_writes_dot(workdir, fig1_path, capsys):
    assert main(["transform", fig1_path]) == EXIT_OK
    assert capsys.readouterr().out.startswith("net fig1: M=10 VB=4 VT=4 H=2\n")
    dot = (workdir / "survnet-out" / "fig1.dot").read_text()
    assert dot.startswith('graph "fig1"')


def test_map_writes_manifest_and_sub_drawings(workdir, fig1_path, capsys):
    assert main(["map", fig1_path, "-o", "maps"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("mode=structural transit=0 vb=4 subs=2")
    assert sorted(p.name for p in (workdir / "maps").iterdir()) == [
        "fig1.map.txt", "fig1.sub0.dot", "fig1.sub1.dot",
    ]


def test_verify_fig1(workdir, fig1_path, capsys):
    assert main(["verify", fig1_path, "--threads", "1"]) == EXIT_OK
    assert capsys.readouterr().out == "1024 scenarios x 4 sinks: all match\n"


def test_verify_random_corpus(workdir, fig1_path, capsys):
    assert main(["verify", fig1_path, "--threads", "1", "--random", "5"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[-1] == "5 random networks: all match"


def test_builddb_is_independent_of_worker_count(workdir, fig1_path, monkeypatch, capsys):
    monkeypatch.setenv("SURVNET_THREADS", "1")
    assert main(["builddb", fig1_path, "-o", "one"]) == EXIT_OK
    monkeypatch.setenv("SURVNET_THREADS", "2")
    assert main(["builddb", fig1_path, "-o", "two"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("sub 0: m=7 records=128 -> fig1.sub0.")
    one = sorted((workdir / "one").glob("*.svdb"))
    two = sorted((workdir / "two").glob("*.svdb"))
    assert [p.name for p in one] == [p.name for p in two]
    assert [p.read_bytes() for p in one] == [p.read_bytes() for p in two]


def test_builddb_csv(workdir, fig1_path):
    assert main(["builddb", fig1_path, "--threads", "1", "--csv"]) == EXIT_OK
    (csv_path,) = sorted((workdir / "survnet-out").glob("fig1.sub1.*.csv"))
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "scenario_bitmask,connected_classes,delivered_capacity"
    assert len(lines) == 1 + 64


def test_query_with_faults(workdir, fig1_path, capsys):
    args = ["query", fig1_path, "--threads", "1", "--faults", "VT761,VT762,H1", "--sink", "20"]
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out == "sink 20: survives connected={64} delivered=100 demand=40\n"


def test_query_reads_databases_from_disk(workdir, fig1_path, capsys):
    _builddb(fig1_path, workdir / "dbs")
    capsys.readouterr()
    args = ["query", fig1_path, "--db-dir", "dbs", "--faults", "VT64", "--faults", "H1"]
    assert main(args) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "sink 20: fails connected={} delivered=0 demand=40"
    assert len(out) == 4


def test_verify_catches_a_corrupted_database(workdir, fig1_path, fig1_mapping, capsys):
    out = workdir / "dbs"
    _builddb(fig1_path, out)
    (path,) = sorted(out.glob("fig1.sub1.*.svdb"))
    payload = bytearray(path.read_bytes())
    first_record = 9 + 17 * 6
    payload[first_record:first_record + 8] = bytes(8)
    path.write_bytes(bytes(payload))
    CatalogService(out).register("fig1", fig1_mapping, 1, load_database(path), path)
    capsys.readouterr()

    assert main(["verify", fig1_path, "--db-dir", str(out)]) == EXIT_MISMATCH
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("1024 scenarios x 4 sinks:")
    assert lines[0].endswith("mismatches")
    assert any(line.startswith("  scenario 0 sink 27:") for line in lines[1:])


def test_tampered_database_is_a_data_error(workdir, fig1_path, capsys):
    out = workdir / "dbs"
    _builddb(fig1_path, out)
    (path,) = sorted(out.glob("fig1.sub0.*.svdb"))
    payload = bytearray(path.read_bytes())
    payload[-1] ^= 0x01
    path.write_bytes(bytes(payload))
    assert main(["verify", fig1_path, "--db-dir", str(out)]) == EXIT_DATA
    assert "does not match its catalog digest" in capsys.readouterr().err


def test_analyze(workdir, fig1_path, capsys):
    assert main(["analyze", fig1_path, "--threads", "1", "--availability", "0.9", "--sink", "30"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("sink 30: demand=40 capacity=350 margin=310 p_survive=0.")
    assert out[1] == "M=10  2^M=1024  subs=2  sum=192  ratio=5.33"


def test_analyze_needs_availability(workdir, fig1_path, capsys):
    assert main(["analyze", fig1_path]) == EXIT_USAGE
    assert "analyze needs --availability" in capsys.readouterr().err


def test_bad_command(workdir, fig1_path, capsys):
    assert main(["explode", fig1_path]) == EXIT_USAGE
    assert "[ERROR]" in capsys.readouterr().err


def test_missing_network_file(workdir, capsys):
    assert main(["report", "absent.net"]) == EXIT_DATA
    assert "cannot read" in capsys.readouterr().err


def test_unknown_fault_id(workdir, fig1_path, capsys):
    assert main(["query", fig1_path, "--threads", "1", "--faults", "VT99"]) == EXIT_DATA
    assert "[ERROR]" in capsys.readouterr().err


def test_unknown_sink(workdir, fig1_path, capsys):
    assert main(["query", fig1_path, "--threads", "1", "--sink", "64"]) == EXIT_DATA
    assert "unknown sink(s): 64" in capsys.readouterr().err


def test_availability_file(tmp_path):
    path = tmp_path / "avail.txt"
    path.write_text("# per element\nVB20 0.99\nH1 0.5\n")
    assert parse_availability(str(path)) == {"VB20": 0.99, "H1": 0.5}
    assert parse_availability("0.75") == 0.75
    with pytest.raises(ProbabilityError, match="outside"):
        parse_availability("1.5")
    path.write_text("VB20 high\n")
    with pytest.raises(ProbabilityError, match="is not a number"):
        parse_availability(str(path))


def test_bad_mode_in_settings_is_a_data_error(workdir, fig1_path, monkeypatch, capsys):
    class FuzzySettings(cli.SettingsRepo):
        def get_setting(self, *keys, default=None):
            if keys == ("mapping", "mode"):
                return "fuzzy"
            return super().get_setting(*keys, default=default)

    monkeypatch.setattr(cli, "SettingsRepo", FuzzySettings)
    assert main(["report", fig1_path]) == EXIT_DATA
    assert "unknown mapping mode 'fuzzy'" in capsys.readouterr().err
