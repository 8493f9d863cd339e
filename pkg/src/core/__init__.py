"""Server plumbing for the disorder-detection toolkit.

Holds the MCP server with its tool discovery and the shared configuration
helpers (YAML file, toolkit settings, per-tool limits).
"""

from .server import DynamicMCPServer

__all__ = ["DynamicMCPServer"]
