#!/usr/bin/env python3
"""
端到端测试：通过命令行跑完整的实验流程
"""

import pytest
import sys
import os
import tempfile
import shutil
import json
from pathlib import Path

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, project_root)

from typer.testing import CliRunner

import regret_lab
from regret_lab import app

CONFIG_DIR = os.path.join(project_root, "configs")


def session_dirs(out):
    return sorted(p for p in Path(out).iterdir() if p.is_dir())


class TestRunCommand:
    """端到端测试：run 子命令"""

    @pytest.fixture
    def runner(self):
        return CliRunner()

    @pytest.fixture
    def temp_output_dir(self):
        """提供临时输出目录"""
        temp_dir = tempfile.mkdtemp()
        yield temp_dir
        # 清理临时目录
        shutil.rmtree(temp_dir, ignore_errors=True)

    def test_inline_flags(self, runner, temp_output_dir):
        """测试只用命令行参数跑一次"""
        result = runner.invoke(app, [
            "run", "--game", "matching_pennies", "--algo", "omd", "--reg", "entropy",
            "--eta", "0.1", "--iters", "50", "--init", "0.9,0.1;0.5,0.5", "--weights", "harmonic",
            "--window", "10", "--out", temp_output_dir,
        ])
        assert result.exit_code == 0, result.output
        assert "==> matching_pennies_omd_entropy_eta0.1_T50_none_s0" in result.output
        assert "[ok] trace ->" in result.output
        assert "Done. Output at:" in result.output

        sessions = session_dirs(temp_output_dir)
        assert len(sessions) == 1
        run_dir = sessions[0] / "matching_pennies_omd_entropy_eta0.1_T50_none_s0"
        assert (run_dir / "trace.csv").is_file()
        summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
        assert summary["config"]["iters"] == 50
        assert summary["bounds_status"]["path_length"]["status"] == "holds"

    def test_config_file_with_override(self, runner, temp_output_dir):
        """测试配置文件加上逐键覆盖"""
        result = runner.invoke(app, [
            "run", "--config", os.path.join(CONFIG_DIR, "mp_oftrl.toml"), "--iters", "30",
            "--out", temp_output_dir,
        ])
        assert result.exit_code == 0, result.output
        assert "_oftrl_entropy_eta0.1_T30_" in result.output

    def test_corruption_flag(self, runner, temp_output_dir):
        """测试腐蚀参数"""
        result = runner.invoke(app, [
            "run", "--game", "matching_pennies", "--eta", "0.1", "--iters", "20",
            "--corruption", "burst:t0=2,width=5,mag=0.3", "--seed", "4", "--window", "5",
            "--out", temp_output_dir,
        ])
        assert result.exit_code == 0, result.output
        run_dir = next(session_dirs(temp_output_dir)[0].iterdir())
        summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
        assert summary["config"]["corruption"]["kind"] == "burst"
        assert all(c <= 2 * 0.3 * 5 + 1e-12 for c in summary["corruption_totals"]["C"])

    @pytest.mark.parametrize("args", [
        ["--game", "matching_pennies", "--eta", "-1", "--iters", "10"],
        ["--game", "matching_pennies", "--iters", "10"],
        ["--game", "no_such_game", "--eta", "0.1", "--iters", "10"],
        ["--game", "matching_pennies", "--eta", "0.1", "--iters", "10", "--schedule", "0.1,0.2"],
        ["--game", "matching_pennies", "--eta", "0.1", "--iters", "10", "--init", "0.2,0.3,0.5"],
    ])
    def test_invalid_config_exit_code(self, runner, temp_output_dir, args):
        """测试配置错误以退出码 2 结束"""
        result = runner.invoke(app, ["run", *args, "--out", temp_output_dir])
        assert result.exit_code == 2
        assert "[error]" in result.output

    def test_overrides_reach_experiment(self, runner, temp_output_dir, mocker):
        """测试命令行覆盖项合并进配置后交给 run_experiment"""
        fake = mocker.patch.object(regret_lab, "run_experiment", return_value={
            "best_iterate": {"t": 3, "gap": 0.5},
            "convergence": {"status": "inconclusive"},
        })
        result = runner.invoke(app, [
            "run", "--config", os.path.join(CONFIG_DIR, "mp_omd.toml"), "--iters", "7", "--seed", "9",
            "--out", temp_output_dir,
        ])
        assert result.exit_code == 0, result.output
        config = fake.call_args.args[0]
        assert config.iters == 7
        assert config.seed == 9
        assert config.init == ((0.9, 0.1), (0.5, 0.5))
        assert "best iterate t=3 gap=0.5; convergence: inconclusive" in result.output


class TestOtherCommands:
    """端到端测试：classify / catalog / scatter / batch"""

    @pytest.fixture
    def runner(self):
        return CliRunner()

    @pytest.fixture
    def temp_output_dir(self):
        """提供临时输出目录"""
        temp_dir = tempfile.mkdtemp()
        yield temp_dir
        shutil.rmtree(temp_dir, ignore_errors=True)

    def test_classify(self, runner, temp_output_dir):
        """测试 classify 打印并写出 JSON 报告"""
        out = os.path.join(temp_output_dir, "reports", "mp.json")
        result = runner.invoke(app, ["classify", "--game", "matching_pennies", "--out", out])
        assert result.exit_code == 0, result.output
        report = json.loads(Path(out).read_text(encoding="utf-8"))
        assert report["zero_sum"] is True
        assert report["harmonic"] is True
        assert '"harmonic": true' in result.output

    def test_classify_unknown(self, runner):
        """测试未知博弈"""
        result = runner.invoke(app, ["classify", "--game", "nope"])
        assert result.exit_code == 2

    def test_catalog(self, runner):
        """测试 catalog 列出所有内置博弈"""
        result = runner.invoke(app, ["catalog"])
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert len(lines) == 8
        assert lines[0].startswith("matching_pennies")
        assert "[harmonic weights]" in lines[0]
        assert "[harmonic weights]" not in next(l for l in lines if l.startswith("harmonic_2x2_identical"))

    def test_scatter(self, runner, temp_output_dir):
        """测试 scatter 写出 CSV 并报告负后悔的种子数"""
        result = runner.invoke(app, [
            "scatter", "--game", "harmonic_2x2", "--seeds", "15", "--rounds", "10",
            "--mode", "random", "--out", temp_output_dir,
        ])
        assert result.exit_code == 0, result.output
        assert "[ok] scatter ->" in result.output
        assert "/15 seeds" in result.output
        csv_files = list(Path(temp_output_dir).rglob("scatter_harmonic_2x2.csv"))
        assert len(csv_files) == 1

    def test_scatter_rejects_bad_counts(self, runner, temp_output_dir):
        """测试种子数为 0"""
        result = runner.invoke(app, ["scatter", "--seeds", "0", "--out", temp_output_dir])
        assert result.exit_code == 2

    @pytest.mark.slow
    def test_batch(self, runner, temp_output_dir):
        """测试 batch 在同一个会话目录下并行跑多个配置"""
        paths = []
        for k, algo in enumerate(["omd", "oftrl"]):
            path = os.path.join(temp_output_dir, f"cfg_{algo}.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"game": "matching_pennies", "algo": algo, "eta": 0.1, "iters": 30,
                           "init": [[0.9, 0.1], [0.5, 0.5]], "window": 10}, f)
            paths.append(path)
        out = os.path.join(temp_output_dir, "out")
        result = runner.invoke(app, ["batch", *paths, "--out", out, "--workers", "2"])
        assert result.exit_code == 0, result.output
        sessions = session_dirs(out)
        assert len(sessions) == 1
        index = json.loads((sessions[0] / "batch.json").read_text(encoding="utf-8"))
        assert [Path(e["run_dir"]).name for e in index] == ["01_cfg_omd", "02_cfg_oftrl"]
        assert abs(index[0]["best_gap"] - index[1]["best_gap"]) < 1e-8

    def test_batch_bad_config(self, runner, temp_output_dir):
        """测试 batch 在启动前校验所有配置"""
        path = os.path.join(temp_output_dir, "bad.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"game": "matching_pennies", "iters": 10, "eta": 0.1, "speed": 3}, f)
        result = runner.invoke(app, ["batch", path, "--out", temp_output_dir])
        assert result.exit_code == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
