"""
Base model with common configuration.

This module provides the base class every domain type inherits from,
so all records are immutable, validated on construction, and reject
unknown fields.
"""

from typing import Any, Self

from pydantic import BaseModel, ConfigDict


class FrozenModel(BaseModel):
    """
    Immutable base model for analysis records.

    Provides:
    - Frozen instances (hashable, safe to share between sweeps)
    - Strict field set (unknown keys are rejected)
    - ``evolve`` for functional updates with re-validation
    """

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        validate_assignment=True,
    )

    def evolve(self, **changes: Any) -> Self:
        """Return a validated copy with ``changes`` applied."""
        data = self.model_dump()
        data.update(changes)
        return type(self).model_validate(data)
