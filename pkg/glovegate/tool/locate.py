import os
import re


class LocateTools:
    """
    文件系统工具
    数据集目录, 模型目录和报告目录的读写都经过这里
    """

    @classmethod
    def scan_folder(cls, folder_path, re_search: str) -> list[str]:
        """
        按文件名正则扫描目录的顶层文件, 不进入子目录, 结果按路径排序以保证会话顺序稳定
        """
        result = list()
        with os.scandir(folder_path) as entries:
            for entry in entries:
                if entry.is_file() and re.search(re_search, entry.name.lower()):
                    result.append(entry.path)
        return sorted(result)

    @classmethod
    def ensure_folder(cls, folder_path: str) -> str:
        os.makedirs(folder_path, exist_ok=True)
        return folder_path

    @classmethod
    def read_file(cls, path: str) -> None | str:
        if os.path.exists(path):
            with open(path, 'r', encoding='utf8') as f:
                text = f.read()
            return text
        else:
            return None

    @classmethod
    def write_file(cls, path: str, text: str, mode: str = 'w'):
        args = dict(
            file=path,
            mode=mode,
        )
        if mode == 'w':
            args |= dict(encoding='utf8', newline='\n')
        with open(**args) as f:
            f.write(text)

    @classmethod
    def read_bytes(cls, path: str) -> None | bytes:
        if os.path.exists(path):
            with open(path, 'rb') as f:
                return f.read()
        else:
            return None

    @classmethod
    def write_bytes(cls, path: str, payload: bytes):
        with open(path, 'wb') as f:
            f.write(payload)


__all__ = ['LocateTools', ]
