"""Tests for tool discovery and loading."""

import sys
from pathlib import Path

import pytest

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.server import DynamicMCPServer  # noqa: E402

THRESHOLD_BOUND_TOOL = '''
from core.server import mcp

@mcp.tool()
def threshold_bound(lam: float, c: float) -> float:
    return lam / (lam + c)
'''


def tools_dir(tmp_path: Path, files: dict[str, str]) -> Path:
    directory = tmp_path / "tools"
    directory.mkdir()
    for name, content in files.items():
        (directory / name).write_text(content)
    return directory


class TestToolDiscovery:
    """Test the tool discovery mechanism."""

    def test_discover_tools_in_directory(self, tmp_path: Path) -> None:
        directory = tools_dir(tmp_path, {"threshold_bound.py": THRESHOLD_BOUND_TOOL})
        server = DynamicMCPServer(name="Test", tools_dir=str(directory))
        server.load_tools()

        assert server.loaded_tools == ["threshold_bound"]
        tool = server.get_tools_sync()["threshold_bound"]
        assert tool.fn(0.1, 0.9) == pytest.approx(0.1)

    def test_init_file_is_skipped(self, tmp_path: Path) -> None:
        directory = tools_dir(
            tmp_path, {"__init__.py": "", "threshold_bound.py": THRESHOLD_BOUND_TOOL}
        )
        server = DynamicMCPServer(name="Test", tools_dir=str(directory))
        server.load_tools()
        assert server.loaded_tools == ["threshold_bound"]

    def test_invalid_tool_fails_fast(self, tmp_path: Path) -> None:
        directory = tools_dir(tmp_path, {"broken.py": "syntax error"})
        server = DynamicMCPServer(name="Test", tools_dir=str(directory))

        with pytest.raises(SystemExit):
            server.load_tools()

    def test_module_without_tool_fails_fast(self, tmp_path: Path) -> None:
        directory = tools_dir(tmp_path, {"helper.py": "def ratio(lam, c):\n    return lam / (lam + c)\n"})
        server = DynamicMCPServer(name="Test", tools_dir=str(directory))

        with pytest.raises(SystemExit):
            server.load_tools()

    def test_empty_tools_directory(self, tmp_path: Path) -> None:
        directory = tools_dir(tmp_path, {})
        server = DynamicMCPServer(name="Test", tools_dir=str(directory))

        server.load_tools()
        assert len(server.loaded_tools) == 0
