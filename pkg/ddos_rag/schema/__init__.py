"""
Base init for the projects schema's
"""

from .schema_getters import *
