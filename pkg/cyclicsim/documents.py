"""
YAML document reading shared by topology files and scenario files.

Documents are parsed with PyYAML and validated against pydantic schema models
that forbid unknown keys. Both syntax and schema failures surface as
ParseError carrying the line number of the offending element.
"""
import logging
from pathlib import Path
from typing import Any, Sequence, Type, TypeVar, Union

import pydantic
import yaml

from cyclicsim.errors import ExportError, ParseError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=pydantic.BaseModel)

PathLike = Union[str, Path]


def _line_of(node: yaml.Node, loc: Sequence[Union[str, int]]) -> int:
    """Walk a composed YAML node tree along a pydantic error location."""
    current = node
    for key in loc:
        if isinstance(current, yaml.MappingNode):
            for key_node, value_node in current.value:
                if str(key_node.value) == str(key):
                    current = value_node
                    break
            else:
                break
        elif isinstance(current, yaml.SequenceNode) and isinstance(key, int):
            if key < len(current.value):
                current = current.value[key]
            else:
                break
        else:
            break
    return current.start_mark.line + 1


def parse_document(text: str, schema: Type[ModelT], source: str = "<string>") -> ModelT:
    """
    Parse YAML text into a validated schema model.

    Args:
        text: YAML document text
        schema: pydantic model describing the document
        source: Name used in error messages

    Returns:
        The validated model instance

    Raises:
        ParseError: On YAML syntax errors or schema violations
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data: Any = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ParseError(str(e.problem or e), line=line, path=source) from e
    except yaml.YAMLError as e:
        raise ParseError(str(e), path=source) from e

    if data is None:
        raise ParseError("empty document", line=1, path=source)
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping", line=1, path=source)

    try:
        return schema.model_validate(data)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        line = _line_of(root, loc) if root is not None else None
        field = ".".join(str(part) for part in loc) or "<root>"
        raise ParseError(f"{field}: {first.get('msg')}", line=line, path=source) from e


def read_document(path: PathLike, schema: Type[ModelT]) -> ModelT:
    """Read and validate a YAML document from disk."""
    path = Path(path)
    logger.debug(f"Reading {schema.__name__} from {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", path=str(path)) from e
    return parse_document(text, schema, source=str(path))


def write_document(data: Any, path: PathLike, header: str = "") -> Path:
    """Write a mapping as a YAML document with an optional comment header."""
    path = Path(path)
    body = yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for line in header.splitlines():
                f.write(f"# {line}\n")
            f.write(body)
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e}") from e
    return path
