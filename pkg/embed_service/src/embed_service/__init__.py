from .service import DEFAULT_MODEL, TokenEmbedder, create_app, main

__version__ = "0.1.0"

__all__ = ["DEFAULT_MODEL", "TokenEmbedder", "create_app", "main"]
