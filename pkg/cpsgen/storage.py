import csv
import io
import json
import os
import typing as t


class StorageMaster:
    def __init__(self, root: str):
        self.root = root

        if not os.path.exists(root):
            os.makedirs(root)


class Storage:
    """
    A named directory below the storage root. The empty name addresses the
    root directory itself.
    """

    def __init__(self, master: StorageMaster, name: str = ""):
        self.master = master
        self.name = name

        if not os.path.exists(self.directory):
            os.makedirs(self.directory)

    @property
    def directory(self) -> str:
        return os.path.join(self.master.root, self.name)

    def exists(self, path: str) -> bool:
        return os.path.exists(self._make_path(path))

    def load(self, path: str) -> str | None:
        try:
            with open(self._make_path(path), "r") as f:
                return f.read()
        except FileNotFoundError:
            return None

    def save(self, path: str, content: str):
        # newline="" keeps csv line endings byte-identical across platforms
        with open(self._make_path(path), "w", newline="") as f:
            f.write(content)

    def load_json(self, path: str) -> t.Any:
        data = self.load(path)
        if data is None:
            return None
        return json.loads(data)

    def save_json(self, path: str, data: t.Any):
        self.save(path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def save_csv(self, path: str, header: list[str], rows: t.Iterable[t.Sequence[t.Any]]):
        self.save(path, to_csv(header, rows))

    def load_csv(self, path: str) -> list[dict[str, str]] | None:
        data = self.load(path)
        if data is None:
            return None
        return list(csv.DictReader(io.StringIO(data)))

    def delete(self, path: str):
        os.remove(self._make_path(path))

    def path_of(self, path: str) -> str:
        return self._make_path(path)

    def _make_path(self, path: str) -> str:
        return os.path.join(self.master.root, self.name, path)

    def __repr__(self) -> str:
        return f"Storage({self.name!r})"


def to_csv(header: list[str], rows: t.Iterable[t.Sequence[t.Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()
