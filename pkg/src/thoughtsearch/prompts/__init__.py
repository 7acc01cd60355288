"""Versioned prompt template assets.

Templates are plain text files using ``string.Template`` placeholders, so
literal braces (JSON examples) need no escaping. One ``*_system.txt`` and
``*_user.txt`` pair per prompt class.
"""

from functools import lru_cache
from importlib import resources
from string import Template


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    text = resources.files(__package__).joinpath(f"{name}.txt").read_text()
    return Template(text.rstrip("\n"))


def render(name: str, **kwargs: str) -> str:
    return load_template(name).substitute(**kwargs)
