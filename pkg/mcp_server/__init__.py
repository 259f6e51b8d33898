"""FastMCP server for directional mean shift."""
