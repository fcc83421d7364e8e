from django.conf import settings

DEFAULTS = {
    'GRID_POINTS': 512,
    'THREADS': 0,
    'TAPS': 64,
}


def get_setting(name):
    """Return ``settings.SPECTRA[name]``, falling back to the built-in default."""
    overrides = getattr(settings, 'SPECTRA', {}) if settings.configured else {}
    return overrides.get(name, DEFAULTS[name])
