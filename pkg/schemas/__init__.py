from .config import GridConfig, LangevinConfig, MixedConfig, OutConfig, RunConfig, RunSection, TlsConfig
