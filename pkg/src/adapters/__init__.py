# /src/adapters/__init__.py

from .cache import ScaleCache
