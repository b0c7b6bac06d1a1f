import json

from modsketch.cli import main


def test_generate_run_and_query(tmp_path, capsys):
    stream = tmp_path / "s.txt"
    assert main(["generate", "distinct=300,40;count=5000;seed=2", "--output", str(stream)]) == 0
    report, sketch, plan = tmp_path / "r.jsonl", tmp_path / "s.bin", tmp_path / "p.json"
    code = main([
        "run", "--input", str(stream), "--schema", "300,40", "--h", "1024", "--w", "3",
        "--strategy", "mod", "--top-k", "5", "--random-k", "10", "--output", str(report),
        "--save-sketch", str(sketch), "--save-plan", str(plan), "--summary",
    ])
    assert code == 0
    err = capsys.readouterr().err
    assert "observed error (top-5)" in err
    records = [json.loads(line) for line in report.read_text().splitlines()]
    assert [r["record"] for r in records[:3]] == ["run", "stream", "strategy"]
    item = next(r for r in records if r["record"] == "item")
    assert json.loads(plan.read_text())["method"] == "mod"

    assert main(["query", "--load-sketch", str(sketch), ",".join(map(str, item["key"]))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["estimate"] == item["estimate"]


def test_run_to_stdout(capsys):
    assert main(["run", "--generate", "distinct=50,50;count=2000;seed=1", "--h", "256", "--w", "2",
                 "--top-k", "3", "--strategy", "countmin"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[-1])["record"] == "summary"


def test_ratio_grid_flag(tmp_path):
    report = tmp_path / "r.jsonl"
    assert main(["run", "--generate", "distinct=30,30,30;count=2000;seed=1", "--h", "1024", "--w", "2",
                 "--top-k", "5", "--strategy", "exhaustive", "--ratio-grid", "3", "--output", str(report)]) == 0
    run = json.loads(report.read_text().splitlines()[0])
    assert run["config"]["ratio_grid"] == [0.25, 0.5, 0.75]


def test_failures_exit_nonzero_with_phase(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1,99\n")
    assert main(["run", "--input", str(bad), "--schema", "10,10", "--h", "16", "--w", "2", "--top-k", "1"]) == 1
    assert "[read]" in capsys.readouterr().err
    assert main(["run", "--generate", "distinct=5,5;count=100", "--h", "16", "--w", "2"]) == 1
    assert "[config]" in capsys.readouterr().err
    assert main(["query", "--load-sketch", str(bad), "1,1"]) == 1
    assert "[query]" in capsys.readouterr().err
