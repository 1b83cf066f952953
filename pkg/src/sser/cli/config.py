"""``key = value`` config files for the command line.

::

    # shared keys apply to every command that has the option
    seed = 7
    [train]
    cell = gru
    dims = 12,12,12
    [gen]
    pattern = bar

Keys are option names with or without the leading dashes (``dur-ms`` and
``dur_ms`` are equivalent). ``true``/``false`` switch boolean flags. Values
from the file are applied first, so flags on the command line win.
"""
from ..exceptions import ConfigurationError

TRUE = {"1", "true", "yes", "on"}
FALSE = {"0", "false", "no", "off"}


def parse_config(text, source="<config>"):
    """Return ``{section or None: {key: value}}``."""
    out = {None: {}}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        out[section][key] = value
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def config_argv(config, command, parser):
    """Translate the shared and ``[command]`` keys into argv tokens for ``parser``."""
    known = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                known[opt[2:]] = action
    argv = []
    items = [(k, v, False) for k, v in config.get(None, {}).items()]
    items += [(k, v, True) for k, v in config.get(command, {}).items()]
    for key, value, explicit in items:
        action = known.get(key)
        if action is None:
            if explicit:
                raise ConfigurationError(f"config key {key!r} is not an option of {command!r}")
            continue
        if action.nargs == 0:
            v = value.lower()
            if v in TRUE:
                argv.append(f"--{key}")
            elif v not in FALSE:
                raise ConfigurationError(f"config key {key!r} expects true/false, got {value!r}")
        else:
            argv += [f"--{key}", value]
    return argv
