"""Simple file hash tools for comparing run artifacts."""

import hashlib
from pathlib import Path


def hash_file(file_path: Path):
    """Compute the md5 hash of a file."""

    # md5 is insecure but good enough to tell two artifacts apart
    md5_hash = hashlib.md5(usedforsecurity=False)
    with Path(file_path).open("rb") as file:
        CHUNK_SIZE = 4096
        # Loop through each chunk untill an empty byte string is returned
        for byte_block in iter(lambda: file.read(CHUNK_SIZE), b""):
            md5_hash.update(byte_block)
        return md5_hash.hexdigest()


def manifest(directory: Path, extensions: tuple[str, ...] = ("json", "csv")) -> dict:
    """Maps every artifact in `directory` with one of `extensions` to its hash.

    The manifest itself and the resolved config are left out.

    .. code-block:: python
        {"adf.json": "9e107d9d372bb6826bd81d3542a419d6", ...}
    """

    skipped = {"manifest.json"}
    entries = {}
    for extension in extensions:
        for file in Path(directory).glob(f"*.{extension}"):
            if file.name not in skipped:
                entries[file.name] = hash_file(file)
    return dict(sorted(entries.items()))
