"""engelnq - nilpotent quotients of finitely presented groups with Engel laws."""

__version__ = "0.1.0"
