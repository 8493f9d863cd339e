"""Tools package for the disorder-detection MCP server.

Each module registers one tool with ``@mcp.tool()`` when the server imports it.
"""
