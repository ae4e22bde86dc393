import types
import typing
import dataclasses
import tomllib
import tomlkit
from glovegate.model import ConfigError
from glovegate.tool.locate import LocateTools


class ConfigTools:
    """
    扁平 toml 配置文件 (key = value) 与冻结 dataclass 之间的转换.
    优先级: 命令行参数 > 配置文件 > dataclass 默认值.
    """

    @classmethod
    def read_toml(cls, path: str) -> dict:
        text = LocateTools.read_file(path)
        if text is None:
            raise ConfigError(f'配置文件{path}不存在')
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as ex:
            raise ConfigError(f'配置文件{path}格式错误: {ex}')
        for k, v in d.items():
            if isinstance(v, dict):
                raise ConfigError(f'配置文件{path}必须是扁平的 key = value, {k}是一个表')
        return d

    @classmethod
    def write_toml(cls, path: str, d: dict):
        LocateTools.write_file(path, tomlkit.dumps({k: v for k, v in d.items() if v is not None}))

    @classmethod
    def _expected(cls, kind) -> tuple[type, ...]:
        # float | None 这样的可选字段按非 None 的成员检查, 配置文件里没有 None
        if isinstance(kind, types.UnionType) or typing.get_origin(kind) is typing.Union:
            members = typing.get_args(kind)
        else:
            members = (kind, )
        return tuple(t for t in members if isinstance(t, type) and t is not type(None))

    @classmethod
    def _coerce(cls, name: str, kind, value):
        expected = cls._expected(kind)
        if not expected:
            return value
        if isinstance(value, bool):
            if bool not in expected:
                raise ConfigError(f'配置项{name}应为{cls._type_names(expected)}, 实际{value!r}')
            return value
        if float in expected and isinstance(value, int):
            return float(value)
        if int in expected and isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, expected):
            raise ConfigError(f'配置项{name}应为{cls._type_names(expected)}, 实际{value!r}')
        return value

    @classmethod
    def _type_names(cls, expected: tuple[type, ...]) -> str:
        return '|'.join(t.__name__ for t in expected)

    @classmethod
    def apply(cls, config, overrides: dict):
        """
        用字典覆盖 dataclass 实例的字段, 值为 None 的项跳过, 未知的键报错
        """
        hints = typing.get_type_hints(type(config))
        fields = {f.name for f in dataclasses.fields(config)}
        changes = dict()
        for k, v in overrides.items():
            if v is None:
                continue
            key = k.replace('-', '_')
            if key not in fields:
                raise ConfigError(f'未知的配置项: {k}')
            changes[key] = cls._coerce(key, hints[key], v)
        return dataclasses.replace(config, **changes)

    @classmethod
    def to_dict(cls, config) -> dict:
        return {f.name: getattr(config, f.name) for f in dataclasses.fields(config)}


__all__ = ['ConfigTools', ]
