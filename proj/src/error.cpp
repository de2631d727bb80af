#include "pmdio/error.hpp"
#include "pmdio/types.hpp"

namespace pmdio {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ok: return "Ok";
    case Errc::already_exists: return "AlreadyExists";
    case Errc::corrupt_index: return "CorruptIndex";
    case Errc::collective_mismatch: return "CollectiveMismatch";
    case Errc::iteration_closed: return "IterationClosed";
    case Errc::iteration_busy: return "IterationBusy";
    case Errc::already_defined: return "AlreadyDefined";
    case Errc::invalid_extent: return "InvalidExtent";
    case Errc::out_of_bounds: return "OutOfBounds";
    case Errc::codec_error: return "CodecError";
    case Errc::io_error: return "IoError";
    case Errc::group_fault: return "GroupFault";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::corrupt_write: return "CorruptWrite";
    case Errc::corrupt_chunk: return "CorruptChunk";
    case Errc::unknown_codec: return "UnknownCodec";
    case Errc::decode_error: return "DecodeError";
    case Errc::parse_error: return "ParseError";
    case Errc::no_checkpoint: return "NoCheckpoint";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::not_found: return "NotFound";
    case Errc::not_defined: return "NotDefined";
  }
  return "Unknown";
}

std::string_view datatype_name(Datatype t) noexcept {
  switch (t) {
    case Datatype::float32: return "float32";
    case Datatype::float64: return "float64";
    case Datatype::uint64: return "uint64";
    case Datatype::int64: return "int64";
  }
  return "unknown";
}

std::optional<Datatype> datatype_from_code(std::uint8_t code) noexcept {
  if (code >= 1 && code <= 4) return static_cast<Datatype>(code);
  return std::nullopt;
}

std::string_view record_kind_name(RecordKind k) noexcept {
  return k == RecordKind::mesh ? "mesh" : "particle_species";
}

}  // namespace pmdio
