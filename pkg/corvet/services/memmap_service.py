import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple
import numpy as np

from ..core.exceptions import AddressError, LoadError
from ..core.logging import app_logger
from ..core.storage import atomic_write
from ..models.fxp import FxPFormat
from ..models.memory import AddressSpec, ParamAddress, ParamMemory, ParamWrite, Topology, ceil_log2

IMAGE_MAGIC = b"CVTP"
IMAGE_VERSION = 1
HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("addr_bits", "u1"),
    ("format_code", "u1"),
    ("count", "<u4"),
    ("reserved", "V4"),
])
RECORD_DTYPE = np.dtype([("address", "<u4"), ("raw", "<i4")])
_WIDTH_IDS = {4: 1, 8: 2, 16: 3, 32: 4}


class MemmapService:
    """Parameter address map, LIFO loading and the binary parameter image."""

    @staticmethod
    def addr_width(t: Topology) -> AddressSpec:
        neuron_bits = [ceil_log2(n) for n in t.N]
        input_bits = [ceil_log2(j) for j in t.J]
        payload = max(n + j for n, j in zip(neuron_bits, input_bits))
        layer_bits = ceil_log2(t.L)
        return AddressSpec(
            layer_bits=layer_bits,
            payload_bits=payload,
            total_bits=layer_bits + 1 + payload,
            neuron_bits=neuron_bits,
            input_bits=input_bits,
        )

    @staticmethod
    def encode(addr: ParamAddress, spec: AddressSpec, topology: Optional[Topology] = None) -> int:
        if addr.layer >= len(spec.input_bits):
            raise AddressError(f"layer {addr.layer} out of range")
        l = addr.layer
        if topology is not None:
            if addr.neuron >= topology.N[l]:
                raise AddressError(f"neuron {addr.neuron} out of range for layer {l} (N = {topology.N[l]})")
            if not addr.is_bias and addr.input >= topology.J[l]:
                raise AddressError(f"input {addr.input} out of range for layer {l} (J = {topology.J[l]})")
        if addr.is_bias and addr.input != 0:
            raise AddressError("bias addresses carry no input index")
        if addr.neuron >> spec.neuron_bits[l] or addr.input >> spec.input_bits[l]:
            raise AddressError(f"field does not fit the layer {l} address widths")

        R = spec.payload_bits
        payload = (addr.neuron << spec.input_bits[l]) | addr.input
        return (l << (R + 1)) | (int(addr.is_bias) << R) | payload

    @staticmethod
    def decode(bits: int, spec: AddressSpec, topology: Topology, strict: bool = True) -> ParamAddress:
        """Inverse of ``encode``; with ``strict`` off, bias input bits are don't-care."""
        if bits < 0 or bits >> spec.total_bits:
            raise AddressError(f"address 0x{bits:x} wider than {spec.total_bits} bits")
        R = spec.payload_bits
        layer = bits >> (R + 1)
        is_bias = bool((bits >> R) & 1)
        payload = bits & ((1 << R) - 1)
        if layer >= topology.L:
            raise AddressError(f"address 0x{bits:x}: layer {layer} out of range")

        in_bits = spec.input_bits[layer]
        neuron = payload >> in_bits
        inp = payload & ((1 << in_bits) - 1)
        if neuron >= topology.N[layer]:
            raise AddressError(f"address 0x{bits:x}: neuron {neuron} out of range for layer {layer}")
        if is_bias:
            if inp and strict:
                raise AddressError(f"address 0x{bits:x}: bias address with nonzero input bits")
            inp = 0
        elif inp >= topology.J[layer]:
            raise AddressError(f"address 0x{bits:x}: input {inp} out of range for layer {layer}")
        return ParamAddress(layer=layer, is_bias=is_bias, neuron=neuron, input=inp)

    @staticmethod
    def forward_order(topology: Topology, spec: AddressSpec) -> List[Tuple[ParamAddress, int]]:
        """Engine read order: per layer, per neuron, the bias then weights 0..J-1."""
        order = []
        for l in range(topology.L):
            for n in range(topology.N[l]):
                bias = ParamAddress(layer=l, is_bias=True, neuron=n)
                order.append((bias, MemmapService.encode(bias, spec)))
                for j in range(topology.J[l]):
                    w = ParamAddress(layer=l, is_bias=False, neuron=n, input=j)
                    order.append((w, MemmapService.encode(w, spec)))
        return order

    @staticmethod
    def build_stream(
        topology: Topology, spec: AddressSpec, params: Sequence[Tuple[np.ndarray, np.ndarray]]
    ) -> List[ParamWrite]:
        """Host write sequence for per-layer (weights, biases) raws: the reversed read order."""
        values = []
        for (w, b), n, j in zip(params, topology.N, topology.J):
            w = np.asarray(w, dtype=np.int64).reshape(n, j)
            b = np.asarray(b, dtype=np.int64).reshape(n)
            for i in range(n):
                values.append(int(b[i]))
                values.extend(int(v) for v in w[i])

        order = MemmapService.forward_order(topology, spec)
        if len(values) != len(order):
            raise LoadError(f"parameter count {len(values)} does not match topology ({len(order)})")
        return [ParamWrite(address=enc, raw=raw) for (_, enc), raw in zip(reversed(order), reversed(values))]

    @staticmethod
    def lifo_load(params: Iterable[ParamWrite], topology: Topology, spec: AddressSpec) -> ParamMemory:
        mem = ParamMemory(topology, spec)
        written = []
        for cycle, write in enumerate(params):
            if not write.valid:
                continue
            try:
                addr = MemmapService.decode(write.address, spec, topology)
            except AddressError as e:
                raise LoadError(f"cycle {cycle}: {str(e)}") from e
            if write.address in mem.entries:
                raise LoadError(f"cycle {cycle}: address 0x{write.address:x} written twice")
            mem.push(write.address, addr.neuron, write.raw)
            written.append(write.address)

        expected = [enc for _, enc in MemmapService.forward_order(topology, spec)]
        missing = set(expected) - set(written)
        if missing:
            app_logger.error(f"Parameter stream is missing {len(missing)} of {len(expected)} entries")
            raise LoadError("parameter stream incomplete", missing=missing)
        if written != expected[::-1]:
            raise LoadError("parameter stream is not in LIFO write order")

        app_logger.debug(f"Loaded {len(written)} parameters into {sum(1 for s in mem.segments if s)} segments")
        return mem

    @staticmethod
    def read_forward(mem: ParamMemory) -> List[int]:
        """Pop every segment in engine order without disturbing the stacks."""
        tops = [len(seg) - 1 for seg in mem.segments]
        values = []
        for addr, enc in MemmapService.forward_order(mem.topology, mem.spec):
            seg = ParamMemory.segment_of(addr.neuron)
            if tops[seg] < 0:
                raise LoadError(f"segment {seg} empty while reading 0x{enc:x}")
            address, raw = mem.segments[seg][tops[seg]]
            tops[seg] -= 1
            if address != enc:
                raise LoadError(f"segment {seg} yielded 0x{address:x} where 0x{enc:x} was expected")
            values.append(raw)
        return values

    @staticmethod
    def layer_params(mem: ParamMemory) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-layer (weights (N, J), biases (N,)) raws read back from memory."""
        values = np.array(MemmapService.read_forward(mem), dtype=np.int64)
        params = []
        pos = 0
        for n, j in zip(mem.topology.N, mem.topology.J):
            block = values[pos:pos + n * (j + 1)].reshape(n, j + 1)
            params.append((block[:, 1:].copy(), block[:, 0].copy()))
            pos += n * (j + 1)
        return params

    @staticmethod
    def lifo_load_inputs(stream: Iterable[ParamWrite], n: int) -> np.ndarray:
        """Input activations written LIFO by the host (index n-1 first), read forward."""
        written = [w for w in stream if w.valid]
        indices = [w.address for w in written]
        missing = set(range(n)) - set(indices)
        if missing:
            raise LoadError("input stream incomplete", missing=missing)
        if indices != list(range(n - 1, -1, -1)):
            raise LoadError("input stream is not in LIFO write order")
        return np.array([w.raw for w in reversed(written)], dtype=np.int64)

    @staticmethod
    def input_stream(raw: np.ndarray) -> List[ParamWrite]:
        return [ParamWrite(address=i, raw=int(raw[i])) for i in range(len(raw) - 1, -1, -1)]

    # Parameter image

    @staticmethod
    def format_code(formats: Sequence[FxPFormat]) -> int:
        """(width_id << 5) | frac when all layers share a format, 0 for mixed images."""
        unique = set(formats)
        if len(unique) != 1:
            return 0
        fmt = unique.pop()
        return (_WIDTH_IDS[fmt.total_bits] << 5) | fmt.frac_bits

    @staticmethod
    def encode_image(writes: Sequence[ParamWrite], addr_bits: int, format_code: int) -> bytes:
        header = np.zeros(1, dtype=HEADER_DTYPE)
        header["magic"] = IMAGE_MAGIC
        header["version"] = IMAGE_VERSION
        header["addr_bits"] = addr_bits
        header["format_code"] = format_code
        header["count"] = len(writes)
        records = np.zeros(len(writes), dtype=RECORD_DTYPE)
        records["address"] = [w.address for w in writes]
        records["raw"] = [w.raw for w in writes]
        return header.tobytes() + records.tobytes()

    @staticmethod
    def decode_image(data: bytes, source: str = "image") -> Tuple[int, int, List[ParamWrite]]:
        """Returns (addr_bits, format_code, writes in file order)."""
        if len(data) < HEADER_DTYPE.itemsize:
            raise LoadError("truncated header", path=source)
        header = np.frombuffer(data[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
        if bytes(header["magic"]) != IMAGE_MAGIC:
            raise LoadError(f"bad magic {bytes(header['magic'])!r}", path=source)
        if int(header["version"]) != IMAGE_VERSION:
            raise LoadError(f"unsupported image version {int(header['version'])}", path=source)

        count = int(header["count"])
        body = data[HEADER_DTYPE.itemsize:]
        if len(body) != count * RECORD_DTYPE.itemsize:
            raise LoadError(f"header announces {count} records, body holds {len(body) / RECORD_DTYPE.itemsize:g}",
                            path=source)
        records = np.frombuffer(body, dtype=RECORD_DTYPE, count=count)
        writes = [ParamWrite(address=int(r["address"]), raw=int(r["raw"])) for r in records]
        return int(header["addr_bits"]), int(header["format_code"]), writes

    @staticmethod
    def write_image(path, writes: Sequence[ParamWrite], addr_bits: int, format_code: int) -> Path:
        try:
            out = atomic_write(path, MemmapService.encode_image(writes, addr_bits, format_code))
            app_logger.info(f"Wrote parameter image {out} with {len(writes)} entries")
            return out
        except OSError as e:
            app_logger.error(f"Error writing parameter image {path}: {str(e)}")
            raise

    @staticmethod
    def read_image(path) -> Tuple[int, int, List[ParamWrite]]:
        path = Path(path)
        if not path.exists():
            raise LoadError("file not found", path=str(path))
        return MemmapService.decode_image(path.read_bytes(), source=str(path))

    @staticmethod
    def image_json(writes: Sequence[ParamWrite], addr_bits: int, format_code: int) -> str:
        return json.dumps(
            {"addr_bits": addr_bits, "format_code": format_code, "entries": [[w.address, w.raw] for w in writes]},
            indent=1,
        )

    @staticmethod
    def parse_image_json(text: str, source: str = "image.json") -> Tuple[int, int, List[ParamWrite]]:
        try:
            doc = json.loads(text)
            writes = [ParamWrite(address=int(a), raw=int(r)) for a, r in doc["entries"]]
            return int(doc["addr_bits"]), int(doc["format_code"]), writes
        except (ValueError, KeyError, TypeError) as e:
            raise LoadError(f"malformed JSON image: {str(e)}", path=source) from e
