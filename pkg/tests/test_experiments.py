from __future__ import annotations

import csv
import hashlib
import json
import math

import pytest

from donorcluster.experiments import (
    KERNELS,
    ConfigError,
    axis_values,
    cell_seed,
    checked_config,
    config_hash,
    list_scenarios,
    load_config,
    read_grid,
    run_scenario,
    validate_config,
)

FIGURES = ("fig3e", "fig4a", "fig4b", "fig4c", "fig5b", "fig5c", "fig6b", "fig6c", "figS2", "figS3", "sampler")


def _small(**overrides):
    config = {
        "name": "small_nmr",
        "kernel": "nmr_crosstalk",
        "template": {"delta_a_mhz": 1.0, "delta_b_t": 0.0},
        "axes": [
            {"param": "delta_b_t", "start": -0.1, "stop": 0.1, "steps": 5},
            {"param": "delta_a_mhz", "values": [0.0, 1.0, 2.0]},
        ],
        "outputs": ["e_ct", "min_detuning_mhz"],
        "seed": 3,
    }
    config.update(overrides)
    return config


def test_builtin_list_covers_every_figure():
    names = list_scenarios()
    assert len(names) >= 8
    for tag in FIGURES:
        assert any(n.startswith(tag) for n in names), tag


@pytest.mark.parametrize("name", list_scenarios())
def test_shipped_scenarios_validate(name):
    config, text = load_config(name)
    assert validate_config(config, text) == []


def test_empty_config_lists_required_keys():
    errors = validate_config({})
    for key in ("name", "kernel", "template", "axes", "outputs"):
        assert any(repr(key) in e for e in errors), key


def test_errors_carry_line_numbers(tmp_path):
    text = json.dumps(_small(outputs=["e_ct", "bogus"]), indent=2)
    path = tmp_path / "bad.json"
    path.write_text(text)
    config, text = load_config(path)
    errors = validate_config(config, text)
    assert len(errors) == 1
    line = int(errors[0].split(":")[0].split()[1])
    assert '"outputs"' in text.splitlines()[line - 1]


@pytest.mark.parametrize(
    "overrides,fragment",
    [
        ({"kernel": "nope"}, "unknown kernel"),
        ({"template": {"delta_a_mhz": 1.0}}, "missing from template"),
        ({"template": {"delta_a_mhz": 1.0, "delta_b_t": 0.0, "colour": 1}}, "not a parameter"),
        ({"axes": [{"param": "delta_b_t", "start": 0, "stop": 1, "steps": 1}]}, "axes"),
        ({"axes": [{"param": "delta_b_t", "values": [0, 1]}, {"param": "delta_b_t", "values": [0, 1]}]}, "duplicate"),
        ({"extra": 1}, "Additional properties"),
    ],
)
def test_invalid_configs_reported(overrides, fragment):
    errors = validate_config(_small(**overrides))
    assert errors and any(fragment in e for e in errors), errors


def test_invalid_json_raises_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\n  \"name\": ,\n}")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "line 2" in exc.value.errors[0]


def test_checked_config_raises_on_errors():
    with pytest.raises(ConfigError):
        checked_config(_small(kernel="nope"))


def test_axis_values():
    assert axis_values({"param": "x", "start": 0.0, "stop": 1.0, "steps": 3}) == [0.0, 0.5, 1.0]
    assert axis_values({"param": "x", "values": [1, 5]}) == [1, 5]


def test_seeds_and_hashes_stable():
    assert cell_seed(1, 2) == cell_seed(1, 2) != cell_seed(1, 3)
    a = _small()
    b = json.loads(json.dumps(a))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(_small(seed=4))


def test_run_writes_grid_and_manifest(tmp_path):
    res = run_scenario(_small(), tmp_path)
    m = json.loads(res.manifest_path.read_text())
    assert m["cells"] == 15 and m["failed_cells"] == []
    assert m["config_sha256"] == config_hash(_small())
    listed = {f["path"]: f for f in m["files"]}
    assert set(listed) == {"e_ct.csv", "min_detuning_mhz.csv"}
    for name, entry in listed.items():
        data = (res.out_dir / name).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        rows = list(csv.reader(data.decode().splitlines()))
        assert rows[0] == ["delta_b_t", "delta_a_mhz", name[:-4]]
        assert len(rows) - 1 == entry["rows"] == 15
        for r in rows[1:]:
            assert float(repr(float(r[2]))) == float(r[2])


def test_run_is_deterministic(tmp_path):
    a = run_scenario("fig3e_esr_crosstalk", tmp_path / "a")
    b = run_scenario("fig3e_esr_crosstalk", tmp_path / "b")
    for out, path in a.files.items():
        assert path.read_bytes() == b.files[out].read_bytes()


def test_jobs_do_not_change_results(tmp_path):
    a = run_scenario(_small(), tmp_path / "serial", jobs=1)
    b = run_scenario(_small(), tmp_path / "parallel", jobs=2)
    for out, path in a.files.items():
        assert path.read_bytes() == b.files[out].read_bytes()


def test_failed_cells_are_accounted(tmp_path):
    config = _small(
        name="with_failures",
        template={"delta_a_mhz": 1.0, "delta_b_t": 0.0, "a0_mhz": 60.0},
        axes=[
            {"param": "a0_mhz", "values": [60.0, -5.0, 30.0]},
            {"param": "delta_a_mhz", "values": [0.0, 1.0]},
        ],
    )
    res = run_scenario(config, tmp_path)
    m = res.manifest
    assert len(m["failed_cells"]) == 2
    for f in m["files"]:
        assert f["rows"] == m["cells"] - len(m["failed_cells"])
    assert all("a0_mhz" in c["params"] and c["error"] for c in m["failed_cells"])


def test_seed_override_recorded(tmp_path):
    res = run_scenario("sampler_donor_count", tmp_path, seed=7)
    assert res.manifest["seed"] == 7


def test_read_grid_and_extent(tmp_path):
    res = run_scenario(_small(), tmp_path)
    g = read_grid(res.files["e_ct"])
    assert g.values.shape == (5, 3)
    assert g.at(0.0, 0.0) == pytest.approx(1.0)
    ext = g.extent(0.5)
    assert ext["delta_a_mhz_max"] == 2.0
    empty = g.extent(-1.0)
    assert all(math.isnan(v) for v in empty.values())


def test_every_kernel_has_outputs():
    for k in KERNELS.values():
        assert k.outputs and k.func.__doc__
