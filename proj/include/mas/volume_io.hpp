#ifndef MAS_VOLUME_IO_HPP
#define MAS_VOLUME_IO_HPP

#include "mas/ddf.hpp"
#include "mas/volume.hpp"

#include <filesystem>
#include <variant>

namespace mas {

// ".mvol" container: a JSON header
//   {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"origin":[ox,oy,oz],
//    "dtype":"f32"|"i16","data":"<relative raw path>"}
// next to a raw little-endian data file in x-fastest order. Scalars are stored
// as 32-bit IEEE-754 floats, labels as signed 16-bit integers. Stored bytes
// round-trip exactly; in-memory values are promoted to double.

void write_volume(const std::filesystem::path& header_path, const Volume& vol);
void write_volume(const std::filesystem::path& header_path, const LabelMap& labels);

using AnyVolume = std::variant<Volume, LabelMap>;
AnyVolume read_volume(const std::filesystem::path& header_path);

Volume read_scalar_volume(const std::filesystem::path& header_path);
LabelMap read_label_volume(const std::filesystem::path& header_path);

// Displacement field: a ".dfield" JSON header listing one scalar ".mvol" per
// component (voxel units).
void write_field(const std::filesystem::path& header_path, const DisplacementField& field);
DisplacementField read_field(const std::filesystem::path& header_path);

// Temp-then-rename text write, shared by report and manifest outputs.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace mas

#endif
