import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest
from click.testing import CliRunner

from smallmarket.cli import CONFIG_ENV, main, read_csv_artifact

DATA = Path(__file__).parent / "data"


def _schema(name):
    return json.loads(resources.files("smallmarket").joinpath("schemas", f"{name}.schema.json").read_text())


def _run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


@pytest.fixture
def solved(tmp_path):
    out = tmp_path / "solve.json"
    res = _run("solve", "--prior", DATA / "bilateral.json", "--out", out)
    assert res.exit_code == 0, res.output
    return out


def test_solve_writes_schema_valid_result(solved):
    doc = json.loads(solved.read_text())
    jsonschema.validate(doc, _schema("solve"))
    assert doc["stats"]["total"] == "3/10"
    assert doc["run_config"]["command"] == "solve"


def test_solve_prints_summary_table(tmp_path):
    res = _run("solve", "--prior", DATA / "uniform3.json", "--out", tmp_path / "s.json")
    lines = res.output.splitlines()
    assert [ln.split()[0] for ln in lines] == ["total", "first_best", "gap"]
    assert lines[0].split()[1] == "1/3" and lines[2].split()[1] == "0"


def test_malformed_json_exits_2_without_output(tmp_path):
    out = tmp_path / "never.json"
    res = _run("solve", "--prior", DATA / "malformed.json", "--out", out)
    assert res.exit_code == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_missing_file_exits_2(tmp_path):
    assert _run("solve", "--prior", tmp_path / "nope.json").exit_code == 2


def test_bad_weights_exit_3_and_name_the_agent(tmp_path):
    out = tmp_path / "never.json"
    res = _run("solve", "--prior", DATA / "bad_weights.json", "--out", out)
    assert res.exit_code == 3
    assert "buyer1" in res.output
    assert not out.exists()


def test_g_dump_rows(tmp_path):
    dump = tmp_path / "g.csv"
    res = _run("solve", "--prior", DATA / "uniform3.json", "--g-dump", dump, "--out", tmp_path / "s.json")
    assert res.exit_code == 0
    notes, rows = read_csv_artifact(dump.read_text())
    assert notes[0].startswith("tool smallmarket")
    row_schema = _schema("gdump_row")
    for r in rows:
        jsonschema.validate(r, row_schema)
    assert len(rows) == 4  # (1/2, 1/2) up to (1, 1)


def test_audit_on_solve_output_is_clean(solved, tmp_path):
    out = tmp_path / "audit.json"
    res = _run("audit", "--pair", solved, "--out", out)
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("audit"))
    assert doc["violation_count"] == 0


def test_audit_rejects_off_support_grid(solved):
    res = _run("audit", "--pair", solved, "--grid", "0,0.3")
    assert res.exit_code == 3


def test_audit_rejects_incompatible_pair(tmp_path):
    pair = {"support": ["0", "1/2", "1"], "f1": ["inf", "inf", "0"], "f2": ["1/2", "1/2", "1/2"]}
    path = tmp_path / "pair.json"
    path.write_text(json.dumps(pair))
    out = tmp_path / "audit.json"
    res = _run("audit", "--pair", path, "--out", out)
    assert res.exit_code == 3
    assert "witness (v1, v2) = (1/2, 1)" in res.output
    assert not out.exists()


def test_overfit_generic_and_nongeneric(tmp_path):
    out = tmp_path / "o.json"
    res = _run("overfit", "--triples", DATA / "generic.json", "--out", out)
    assert res.exit_code == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("overfit"))
    assert doc["equal"] is True
    res = _run("overfit", "--triples", DATA / "nongeneric.json")
    assert res.exit_code == 4
    assert "witness: 1/2" in res.output


def test_oracle_agrees_with_solve(tmp_path):
    out = tmp_path / "o.json"
    res = _run("oracle", "--prior", DATA / "uniform3.json", "--out", out)
    assert res.exit_code == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("oracle"))
    assert doc["agrees"] and doc["total"] == "1/3"


def test_eval_with_canonicalize(solved, tmp_path):
    out = tmp_path / "e.json"
    res = _run("eval", "--prior", DATA / "bilateral.json", "--pair", solved, "--canonicalize", "--out", out)
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("eval"))
    totals = [s["total"] for s in doc["canonical"]["steps"]]
    assert totals == ["3/10"] * 4


def test_learn_and_stability(tmp_path):
    out = tmp_path / "l.json"
    res = _run("learn", "--sampler", DATA / "uniform3.json", "--epsilon", "0.2", "--seed", 3, "--out", out)
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema("learn"))
    assert doc["run_config"]["epsilon"] == "1/5"

    csv_out, st_out = tmp_path / "st.csv", tmp_path / "st.json"
    res = _run("stability", "--prior", DATA / "uniform3.json", "--pair", out, "--epsilon", "0.2",
               "--trials", 3, "--csv", csv_out, "--out", st_out)
    assert res.exit_code == 0, res.output
    jsonschema.validate(json.loads(st_out.read_text()), _schema("stability"))
    _, rows = read_csv_artifact(csv_out.read_text())
    assert [r["trial"] for r in rows] == ["0", "1", "2"]
    for r in rows:
        jsonschema.validate(r, _schema("stability_row"))


def test_impossibility_rows(tmp_path):
    out = tmp_path / "imp.csv"
    res = _run("impossibility", "--t", 5, "--c", "0.1", "--trials", 1, "--seed", 2, "--out", out)
    assert res.exit_code == 0, res.output
    notes, rows = read_csv_artifact(out.read_text())
    assert [(r["regime"], r["seed"]) for r in rows] == [("generic", "2"), ("uniform", "2")]
    assert rows[0]["T"] == "151"
    for r in rows:
        jsonschema.validate(r, _schema("impossibility_row"))


def test_impossibility_rejects_bad_c():
    assert _run("impossibility", "--c", "0", "--trials", 1).exit_code == 3


def test_figures_cases(tmp_path):
    out = tmp_path / "fig.csv"
    res = _run("figures", "--case", "uhalf", "--grid", 11, "--out", out)
    assert res.exit_code == 0, res.output
    notes, rows = read_csv_artifact(out.read_text())
    probe = json.loads(next(n for n in notes if n.startswith("probe "))[6:])
    assert probe["target"] == ["0", "2/5", "3/10"]
    assert probe["allocation"] in {"SELLER", "BUYER1", "BUYER2"}
    assert "allocation at" in res.output
    for r in rows:
        jsonschema.validate(r, _schema("figures_row"))
    assert _run("figures", "--case", "nope").exit_code == 2  # click usage error


def test_config_file_env_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": "1/4", "seed": 5}))
    out = tmp_path / "l.json"
    res = _run("learn", "--sampler", DATA / "uniform3.json", "--out", out, env={CONFIG_ENV: str(cfg)})
    assert res.exit_code == 0, res.output
    rc = json.loads(out.read_text())["run_config"]
    assert (rc["epsilon"], rc["seed"]) == ("1/4", 5)
    res = _run("learn", "--sampler", DATA / "uniform3.json", "--config", cfg, "--seed", 9, "--out", out)
    rc = json.loads(out.read_text())["run_config"]
    assert (rc["epsilon"], rc["seed"]) == ("1/4", 9)


def test_bad_config_values_exit_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run("solve", "--prior", DATA / "uniform3.json", "--config", cfg).exit_code == 3
    cfg.write_text(json.dumps({"epsilon": "2"}))
    assert _run("solve", "--prior", DATA / "uniform3.json", "--config", cfg).exit_code == 3


def test_version_flag():
    res = _run("--version")
    assert res.exit_code == 0 and "smallmarket" in res.output
