"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class PlatesynthError(Exception):
    """Base class; ``to_dict`` gives the machine-readable CLI payload."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class ConfigurationError(PlatesynthError):
    kind = "configuration_error"


class MeshParseError(PlatesynthError):
    kind = "mesh_parse_error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class AssetValidationError(PlatesynthError):
    kind = "validation_error"

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class PlanningError(PlatesynthError):
    kind = "planning_error"


class SimulationDivergenceError(PlatesynthError):
    kind = "simulation_divergence"

    def __init__(self, step: int, detail: str = "non-finite rigid body state"):
        self.step = step
        super().__init__(f"{detail} at step {step}")


class GenerationError(PlatesynthError):
    kind = "generation_error"


class RuleError(PlatesynthError):
    """Structured failure from the plating rule parser."""

    kind = "rule_error"

    def __init__(self, message: str, *, rule_index: int | None = None, field: str | None = None,
                 line: int | None = None, column: int | None = None, code: str = "invalid"):
        self.rule_index = rule_index
        self.field = field
        self.line = line
        self.column = column
        self.code = code
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if rule_index is not None:
            where.append(f"rule {rule_index}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{'; '.join(where)}: " if where else ""
        super().__init__(prefix + message)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(code=self.code, rule_index=self.rule_index, field=self.field,
                   line=self.line, column=self.column)
        return out


class PlacementError(PlatesynthError):
    kind = "placement_error"


class AssetLookupError(PlatesynthError, KeyError):
    kind = "lookup_error"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class RangeError(PlatesynthError):
    kind = "range_error"


class ManifestError(PlatesynthError):
    kind = "manifest_error"
