from src.app import app

__all__ = ["app"]
