import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taylorshift.cli import COMMANDS, ConfigError, RunConfig, main, render_svg, run
from taylorshift.geometry import CRESCENT, UNIT_DISC, DomainSpec, make_cusp

SMALL_Z = {"kind": "finite-list", "angles": [0.0], "accumulation_point": None}

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
json_scalar = st.one_of(st.none(), st.booleans(), st.integers(-10**6, 10**6), finite, st.text(max_size=8))


@given(
    st.sampled_from(COMMANDS),
    st.one_of(st.none(), st.text(max_size=12)),
    st.dictionaries(st.text(max_size=6), st.floats(min_value=1e-300, max_value=1.0), max_size=3),
    st.integers(0, 2**31),
    st.dictionaries(st.text(max_size=6), st.one_of(json_scalar, st.lists(finite, max_size=4)), max_size=4),
)
@settings(max_examples=100)
def test_config_round_trip(command, domain_file, tolerances, seed, params):
    cfg = RunConfig(command, domain_file, None, tolerances, "out", seed, params)
    text = cfg.dumps()
    back = RunConfig.loads(text)
    assert back == cfg
    assert back.dumps() == text


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig("fly").validate()
    with pytest.raises(ConfigError):
        RunConfig("build", tolerances={"quad": -1}).validate()
    with pytest.raises(ConfigError):
        RunConfig.loads('{"command": "build", "colour": 1}')


def test_exit_code_for_bad_schedule(tmp_path):
    cfg = RunConfig("build", z_spec=SMALL_Z, output_dir=str(tmp_path), params={"stages": 2, "r_schedule": [0.4, 0.45]})
    assert run(cfg, quiet=True) == 2


def test_exit_code_for_unknown_command(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"command": "fly"}')
    assert main(["--config", str(path), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main([]) == 2


def test_eigen_on_crescent(tmp_path):
    out = tmp_path / "eigen"
    assert main(["--command", "eigen", "--out", str(out), "--quiet"]) == 0
    rows = json.loads((out / "eigen.json").read_text())
    assert rows[0]["verdict"] == "eigenvalue" and rows[0]["angle"] == 0.0
    assert not (out / "FAILED").exists()


def test_integrate_disc_measure(tmp_path):
    cfg = RunConfig("integrate", output_dir=str(tmp_path), params={"domain": "disc"})
    assert run(cfg, quiet=True) == 0
    res = json.loads((tmp_path / "integrate.json").read_text())
    assert res["value"] == pytest.approx(2 * 3.141592653589793, abs=1e-6)


def test_render_svg():
    disc = render_svg(UNIT_DISC)
    assert disc.startswith("<svg") and disc.rstrip().endswith("</svg>")
    assert "<path" not in disc
    assert 'r="0.5"' in render_svg(CRESCENT)
    dom = DomainSpec.disc([make_cusp(0.3, 1.0, 1.0, 0.5)])
    svg = render_svg(dom, zoom=0)
    assert svg.count("<path") == 2 and "0.3000" in svg
    assert svg == render_svg(dom, zoom=0)


def test_render_pipeline(tmp_path):
    cfg = RunConfig("render", output_dir=str(tmp_path), params={"domain": "cusp", "anchor_angle": 1.0})
    assert run(cfg, quiet=True) == 0
    assert "1.0000" in (tmp_path / "domain.svg").read_text()


@pytest.fixture(scope="module")
def small_build(tmp_path_factory):
    out = tmp_path_factory.mktemp("build")
    cfg = RunConfig("build", z_spec=SMALL_Z, output_dir=str(out), params={"stages": 1, "r_schedule": [0.5]})
    assert run(cfg, quiet=True) == 0
    return cfg, out


def test_build_artifacts_are_deterministic(small_build, tmp_path):
    cfg, out = small_build
    again = RunConfig.loads(cfg.dumps())
    again.output_dir = str(tmp_path)
    assert run(again, quiet=True) == 0
    for name in ("domain.json", "certificates.jsonl", "domain.svg"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_verify_accepts_and_detects_tampering(small_build, tmp_path):
    _, out = small_build
    good = RunConfig("verify", domain_file=str(out / "domain.json"), output_dir=str(tmp_path / "ok"),
                     params={"certificates": str(out / "certificates.jsonl")})
    assert run(good, quiet=True) == 0
    lines = (out / "certificates.jsonl").read_text().splitlines()
    d = json.loads(lines[0])
    d["integral_gamma"] = [v * 0.5 for v in d["integral_gamma"]]
    bad_path = tmp_path / "bad.jsonl"
    bad_path.write_text(json.dumps(d, sort_keys=True) + "\n")
    bad = RunConfig("verify", domain_file=str(out / "domain.json"), output_dir=str(tmp_path / "bad"),
                    params={"certificates": str(bad_path)})
    assert run(bad, quiet=True) == 1
    assert "verify" in (tmp_path / "bad" / "FAILED").read_text()


def test_verify_needs_certificates(tmp_path):
    assert run(RunConfig("verify", output_dir=str(tmp_path)), quiet=True) == 2
