"""
Noncommutative CZ Lab - Field Container Tests
場容器格式測試

測試範圍：
1. 編碼與解碼 (位元完全一致)
2. 損壞檔案的錯誤處理
3. 原子寫入與分解目錄
"""

import json
import os
import sys

import numpy as np
import pytest

# 將 src 目錄加入路徑
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from container import (
    MAGIC,
    MANIFEST_NAME,
    decode_field,
    encode_field,
    load_components,
    load_field,
    save_components,
    save_field,
    write_text_atomic,
)
from dyadic_field import DyadicGrid, MatrixField
from errors import ContainerError


@pytest.fixture
def field():
    grid = DyadicGrid(2, 2, 2, "zero")
    rng = np.random.default_rng(7)
    a = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return MatrixField(grid, a)


class TestEncoding:
    """測試 encode_field / decode_field"""

    def test_layout(self, field):
        """TC-CO-01: 魔術字、JSON 標頭行與原始負載"""
        data = encode_field(field)
        assert data.startswith(MAGIC)
        end = data.find(b"\n", len(MAGIC))
        header = json.loads(data[len(MAGIC):end])
        assert header["d"] == 2 and header["K"] == 2 and header["n"] == 2
        assert header["boundary"] == "zero"
        assert len(data) - end - 1 == field.values.size * 16

    def test_bit_exact(self, field):
        """TC-CO-02: 解碼後位元完全一致，網格參數保留"""
        back = decode_field(encode_field(field))
        assert back.grid == field.grid
        assert back.values.tobytes() == field.values.tobytes()

    def test_deterministic_bytes(self, field):
        """TC-CO-03: 相同場產生相同位元組"""
        assert encode_field(field) == encode_field(MatrixField(field.grid, field.values.copy()))


class TestCorruption:
    """測試損壞檔案"""

    def test_bad_magic(self, field):
        """TC-CO-04: 魔術字錯誤拋出 ContainerError"""
        data = b"XXFIELD\n" + encode_field(field)[len(MAGIC):]
        with pytest.raises(ContainerError) as info:
            decode_field(data)
        assert info.value.error_code == "CONTAINER_IO"

    def test_truncated_payload(self, field):
        """TC-CO-05: 負載被截斷"""
        with pytest.raises(ContainerError):
            decode_field(encode_field(field)[:-8])

    def test_unreadable_header(self):
        """TC-CO-06: 標頭不是 JSON"""
        with pytest.raises(ContainerError):
            decode_field(MAGIC + b"{not json\n")

    def test_shape_mismatch(self, field):
        """TC-CO-07: 標頭形狀與網格不符"""
        data = encode_field(field)
        end = data.find(b"\n", len(MAGIC))
        header = json.loads(data[len(MAGIC):end])
        header["shape"] = [1, 1, 2, 2]
        patched = MAGIC + json.dumps(header).encode("ascii") + data[end:]
        with pytest.raises(ContainerError):
            decode_field(patched)

    def test_missing_file(self, tmp_path):
        """TC-CO-08: 檔案不存在亦為 ContainerError (同時是 OSError)"""
        with pytest.raises(OSError):
            load_field(tmp_path / "missing.ncf")


class TestFiles:
    """測試檔案寫入"""

    def test_save_load(self, field, tmp_path):
        """TC-CO-09: 寫入後讀回；不留下暫存檔"""
        path = save_field(tmp_path / "sub" / "f.ncf", field)
        assert load_field(path).values.tobytes() == field.values.tobytes()
        assert sorted(p.name for p in path.parent.iterdir()) == ["f.ncf"]

    def test_text_overwrite(self, tmp_path):
        """TC-CO-10: 原子寫入覆蓋舊內容"""
        path = tmp_path / "a.json"
        write_text_atomic(path, "old")
        write_text_atomic(path, "new")
        assert path.read_text() == "new"

    def test_components(self, field, tmp_path):
        """TC-CO-11: 分解目錄包含 manifest 與每個分量"""
        directory = save_components(tmp_path / "dec", {"g": field, "f": field}, {"lambda": 0.5})
        assert (directory / MANIFEST_NAME).exists()
        manifest, fields = load_components(directory)
        assert manifest["components"] == ["f", "g"]
        assert manifest["lambda"] == 0.5
        assert fields["g"].values.tobytes() == field.values.tobytes()

    def test_components_corrupt_manifest(self, tmp_path):
        """TC-CO-12: manifest 損壞拋出 ContainerError"""
        (tmp_path / MANIFEST_NAME).write_text("{", encoding="utf-8")
        with pytest.raises(ContainerError):
            load_components(tmp_path)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
