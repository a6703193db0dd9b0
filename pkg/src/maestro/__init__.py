"""Learn how score features map to listener emotions and generate score interpretations toward a target emotion."""

__version__ = "0.1.0"
