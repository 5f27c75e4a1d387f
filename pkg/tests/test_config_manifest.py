import pytest

from praf.config import ConfigFileError, RunConfig, load_config, parse_config, render_config
from praf.errors import ConfigError
from praf.manifest import load_manifest, parse_manifest


def test_defaults():
    cfg = RunConfig.defaults()
    assert cfg["epsilon"] == 16 / 255 and cfg["eta"] == 1 / 255
    assert (cfg["T"], cfg["M"], cfg["ranks"], cfg["gamma"]) == (300, 3, (1, 3, 5), 0.6)
    assert (cfg["lambda_cls"], cfg["lambda_patch"]) == (0.5, 1.5)
    assert cfg["model"] is None
    assert len(cfg.encoder_configs()) == 3


def test_parse_values_and_comments():
    cfg = parse_config("""
# comment
[attack]
epsilon = 8/255   # trailing comment
ranks = 1, 2, 3
crop_enabled = off
[schedule]
T = 30
resolutions = 16, 32, 64
""")
    assert cfg["epsilon"] == 8 / 255
    assert cfg["ranks"] == (1, 2, 3)
    assert cfg["crop_enabled"] is False
    assert cfg["resolutions"] == (16, 32, 64)
    assert cfg["T"] == 30 and cfg["M"] == 3


@pytest.mark.parametrize("text, lineno", [
    ("[attack]\nepsilon = lots\n", 2),
    ("[attack]\n\nbogus = 1\n", 3),
    ("epsilon = 0.1\n", 1),
    ("[nope]\n", 1),
    ("[attack]\ngamma = 0.5\ngamma = 0.6\n", 3),
    ("[attack]\njust words\n", 2),
    ("[schedule]\nT = 3.5\n", 2),
])
def test_errors_carry_line_numbers(text, lineno):
    with pytest.raises(ConfigFileError) as info:
        parse_config(text, "run.cfg")
    assert info.value.lineno == lineno
    assert f"run.cfg:{lineno}:" in str(info.value)


def test_render_round_trip():
    cfg = parse_config("[attack]\nepsilon = 8/255\nseed = 4\n[judge]\nmodel = judge-x\n")
    again = parse_config(render_config(cfg))
    assert again.values == cfg.values
    assert parse_config(render_config(RunConfig.defaults())).values == RunConfig.defaults().values


def test_override_and_attack_config():
    cfg = RunConfig.defaults()
    with pytest.raises(ConfigError):
        cfg.attack_config()
    cfg.override("seed", "9")
    cfg.override("gamma", "0.25")
    ac = cfg.attack_config()
    assert ac.seed == 9 and ac.gamma == 0.25
    with pytest.raises(ConfigFileError):
        cfg.override("nonsense", "1")
    with pytest.raises(ConfigFileError):
        cfg.override("T", "many")


def test_mismatched_ensemble_lists():
    cfg = parse_config("[ensemble]\ndepths = 4, 4\n")
    with pytest.raises(ConfigError):
        cfg.encoder_configs()


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigFileError, match="cannot read"):
        load_config(tmp_path / "none.cfg")


# --- manifest ---------------------------------------------------------------------

def test_manifest_parsing(tmp_path):
    text = """
# clean, target, output
a.png, b.png, out/a.png
/abs/c.png, d.png, out/c.png, gamma=0.3, T=10   # per-pair overrides
"""
    (tmp_path / "m.txt").write_text(text)
    recs = load_manifest(tmp_path / "m.txt")
    assert len(recs) == 2
    assert recs[0].clean_path == str(tmp_path / "a.png")
    assert recs[1].clean_path == "/abs/c.png"
    assert recs[1].overrides == {"gamma": 0.3, "T": 10}
    assert recs[1].lineno == 4
    assert recs[0].trace_path == str(tmp_path / "out" / "a.trace.jsonl")
    assert recs[0].stages_path == str(tmp_path / "out" / "a.stages.jsonl")


@pytest.mark.parametrize("text, lineno", [
    ("a.png, b.png\n", 1),
    ("a.png, , c.png\n", 1),
    ("a, b, c\n\na2, b2, c\n", 3),
    ("a, b, c, gamma\n", 1),
    ("a, b, c, model=x\n", 1),
    ("a, b, c\na, b, d, gamma=high\n", 2),
])
def test_manifest_errors(text, lineno):
    with pytest.raises(ConfigFileError) as info:
        parse_manifest(text, "m.txt")
    assert info.value.lineno == lineno


def test_manifest_missing_file(tmp_path):
    with pytest.raises(ConfigFileError, match="cannot read manifest"):
        load_manifest(tmp_path / "nope.txt")
