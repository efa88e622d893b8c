"""Service layer for survnet."""
