"""All the railtree CLI commands."""
