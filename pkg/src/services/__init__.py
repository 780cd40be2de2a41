# /src/services/__init__.py

from .experiments import ExperimentServices
