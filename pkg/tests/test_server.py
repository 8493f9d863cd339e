"""Tests for the disorder-detection MCP server core functionality."""

import sys
from pathlib import Path
from unittest.mock import mock_open, patch

import pytest

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.server import DynamicMCPServer  # noqa: E402
from core.utils import get_tool_config, get_toolkit_settings, load_config  # noqa: E402
from disorder.errors import ConfigError  # noqa: E402


class TestDynamicMCPServer:
    """Test the dynamic MCP server functionality."""

    def test_server_initialization(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="src/tools")
        assert server.name == "Test Server"
        assert server.tools_dir == Path("src/tools")
        assert server.settings.shiryaev_resolution == 2001

    def test_server_with_nonexistent_tools_dir(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="nonexistent")

        # Should not raise exception, just log
        server.load_tools()
        assert len(server.loaded_tools) == 0

    def test_load_config(self) -> None:
        config_data = """
        toolkit:
          dt: 0.01
        tools:
          estimate_risk:
            max_paths: 500
        """

        with patch("builtins.open", mock_open(read_data=config_data)):
            config = load_config("test.yaml")
            assert config["toolkit"]["dt"] == 0.01
            assert config["tools"]["estimate_risk"]["max_paths"] == 500

    def test_load_config_missing_file(self, tmp_path: Path) -> None:
        assert load_config(str(tmp_path / "absent.yaml")) == {}

    def test_get_tool_config(self) -> None:
        with patch("core.utils.load_config") as mock_load:
            mock_load.return_value = {
                "tools": {
                    "solve_shiryaev": {"resolution": 501},
                    "estimate_risk": {"max_paths": 100},
                }
            }

            assert get_tool_config("solve_shiryaev")["resolution"] == 501
            assert get_tool_config("estimate_risk")["max_paths"] == 100
            assert get_tool_config("nonexistent") == {}

    def test_run_method_default_mode(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="src/tools")

        with patch.object(server.mcp, "run") as mock_run:
            server.run()
            mock_run.assert_called_once()

    def test_run_method_http_mode(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="src/tools")

        with patch.object(server.mcp, "run") as mock_run:
            server.run(transport_mode="http", host="0.0.0.0", port=8080)
            mock_run.assert_called_once_with(transport="http", host="0.0.0.0", port=8080, path="/mcp")

    def test_http_server_missing_dependencies(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="src/tools")

        with patch.object(server.mcp, "run") as mock_run:
            mock_run.side_effect = ImportError("No module named 'uvicorn'")
            with pytest.raises(ImportError, match="No module named 'uvicorn'"):
                server.run(transport_mode="http", host="localhost", port=3000)


class TestToolkitSettings:
    """Numerical defaults from kmcp.yaml and QDD_* overrides."""

    def test_defaults_from_file(self, tmp_path: Path) -> None:
        path = tmp_path / "kmcp.yaml"
        path.write_text("toolkit:\n  dt: 0.01\n  n_paths: 5000\n")
        settings = get_toolkit_settings(str(path))
        assert settings.dt == 0.01
        assert settings.n_paths == 5000
        assert settings.ci_z == 3.0

    def test_environment_overrides_file(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        path = tmp_path / "kmcp.yaml"
        path.write_text("toolkit:\n  dt: 0.01\n")
        monkeypatch.setenv("QDD_DT", "0.002")
        monkeypatch.setenv("QDD_WORKERS", "4")
        settings = get_toolkit_settings(str(path))
        assert settings.dt == 0.002
        assert settings.workers == 4

    def test_unknown_setting_rejected(self, tmp_path: Path) -> None:
        path = tmp_path / "kmcp.yaml"
        path.write_text("toolkit:\n  colour: red\n")
        with pytest.raises(ConfigError):
            get_toolkit_settings(str(path))

    def test_bad_override_rejected(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("QDD_N_PATHS", "many")
        with pytest.raises(ConfigError):
            get_toolkit_settings(str(tmp_path / "absent.yaml"))


class TestToolLoading:
    """Test the tool loading mechanism."""

    def test_tool_function_detection(self) -> None:
        server = DynamicMCPServer(name="Test Server", tools_dir="src/tools")
        server.load_tools()

        assert server.loaded_tools == ["estimate_risk", "run_experiment", "solve_shiryaev"]
