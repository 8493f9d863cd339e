"""MCP server exposing the disorder-detection toolkit.

Tools live one per file under ``src/tools``; importing a file registers its
functions through the ``@mcp.tool()`` decorator on the module-level
:data:`mcp` instance.
"""

import importlib.util
import logging
import sys
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from fastmcp import FastMCP

from .utils import ToolkitSettings, config_path, get_toolkit_settings, load_config

# Global FastMCP instance for tools to import
mcp: FastMCP = FastMCP(name="disorder-detection")


class DynamicMCPServer:
    """MCP server that discovers its tools from a directory."""

    def __init__(self, name: str, tools_dir: str = "src/tools"):
        """Initialize the server.

        Args:
            name: Server name
            tools_dir: Directory containing tool files
        """
        global mcp
        self.name = name
        self.tools_dir = Path(tools_dir)
        self.config = load_config(config_path())

        self._load_local_env()
        self.settings: ToolkitSettings = get_toolkit_settings()

        mcp = FastMCP(name=self.name)
        self.mcp = mcp
        self.loaded_tools: list[str] = []

    def _load_local_env(self) -> None:
        """Load environment variables (QDD_* overrides) from a .env file if present."""
        if load_dotenv(override=True):
            logging.info("Loaded environment variables from .env file")

    def load_tools(self) -> None:
        """Import every tool module; exit if any of them fails to register."""
        if not self.tools_dir.exists():
            logging.error(f"Tools directory {self.tools_dir} does not exist")
            return

        tool_files = sorted(f for f in self.tools_dir.glob("*.py") if f.name != "__init__.py")
        if not tool_files:
            logging.warning(f"No tool files found in {self.tools_dir}")
            return

        has_errors = False
        for tool_file in tool_files:
            tool_name = tool_file.stem
            try:
                tools_before = len(self.mcp._tool_manager._tools)
                if not self._import_tool_module(tool_file, tool_name):
                    logging.error(f"Failed to load tool module: {tool_name}")
                    has_errors = True
                elif len(self.mcp._tool_manager._tools) > tools_before:
                    self.loaded_tools.append(tool_name)
                    logging.info(f"Loaded tool module: {tool_name}")
                else:
                    logging.error(f"Tool file {tool_name} did not register any tools")
                    has_errors = True
            except Exception as e:
                logging.error(f"Error loading tool {tool_file.name}: {e}")
                has_errors = True

        # Fail fast - a half-loaded toolkit is not served
        if has_errors:
            sys.exit(1)

        logging.info(f"Loaded {len(self.loaded_tools)} tools (dt={self.settings.dt:g}, n_paths={self.settings.n_paths})")

    def _import_tool_module(self, tool_file: Path, tool_name: str) -> bool:
        """Import a tool module so its decorators register with :data:`mcp`."""
        try:
            spec = importlib.util.spec_from_file_location(tool_name, tool_file)
            if spec is None or spec.loader is None:
                return False
            module = importlib.util.module_from_spec(spec)
            sys.modules[f"tools.{tool_name}"] = module
            spec.loader.exec_module(module)
            return True
        except Exception as e:
            logging.error(f"Error importing {tool_file}: {e}")
            return False

    def get_tools_sync(self) -> dict[str, Any]:
        """Registered tools keyed by name, for tests."""
        return self.mcp._tool_manager._tools

    def run(self, transport_mode: str = "stdio", host: str = "localhost", port: int = 3000) -> None:
        """Run the FastMCP server.

        Args:
            transport_mode: "stdio" or "http"
            host: Host to bind to in HTTP mode
            port: Port to bind to in HTTP mode
        """
        if transport_mode == "http":
            self.mcp.run(transport="http", host=host, port=port, path="/mcp")
        else:
            self.mcp.run()
