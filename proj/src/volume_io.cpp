#include "mas/volume_io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace mas {

namespace {

using nlohmann::json;

json header_common(const Dims& dims, const Vec3& spacing, const Vec3& origin,
                   const std::string& dtype, const std::string& raw_name) {
    json j;
    j["dims"] = {dims.nx, dims.ny, dims.nz};
    j["spacing"] = {spacing.x, spacing.y, spacing.z};
    j["origin"] = {origin.x, origin.y, origin.z};
    j["dtype"] = dtype;
    j["data"] = raw_name;
    return j;
}

template <typename T>
void write_raw(const std::filesystem::path& path, const std::vector<T>& values) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw io_error("cannot open for writing: " + tmp.string());
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(T)));
        if (!os) throw io_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open for reading: " + path.string());
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes != count * sizeof(T))
        throw io_error("raw data length mismatch: " + path.string() + " has " +
                       std::to_string(bytes) + " bytes, expected " +
                       std::to_string(count * sizeof(T)));
    is.seekg(0);
    std::vector<T> out(count);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw io_error("read failed: " + path.string());
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_text_atomic(path, text);
}

struct ParsedHeader {
    Dims dims;
    Vec3 spacing, origin;
    std::string dtype;
    std::filesystem::path raw_path;
};

ParsedHeader parse_header(const std::filesystem::path& header_path) {
    std::ifstream is(header_path);
    if (!is) throw io_error("cannot open header: " + header_path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw io_error("malformed header " + header_path.string() + ": " + e.what());
    }
    ParsedHeader h;
    try {
        h.dims = {j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(),
                  j.at("dims").at(2).get<int>()};
        h.spacing = {j.at("spacing").at(0).get<double>(), j.at("spacing").at(1).get<double>(),
                     j.at("spacing").at(2).get<double>()};
        h.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>(),
                    j.at("origin").at(2).get<double>()};
        h.dtype = j.at("dtype").get<std::string>();
        h.raw_path = header_path.parent_path() / j.at("data").get<std::string>();
    } catch (const json::exception& e) {
        throw io_error("malformed header " + header_path.string() + ": " + e.what());
    }
    if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0)
        throw io_error("invalid header (non-positive dims): " + header_path.string());
    if (h.spacing.x <= 0.0 || h.spacing.y <= 0.0 || h.spacing.z <= 0.0)
        throw io_error("invalid header (non-positive spacing): " + header_path.string());
    if (h.dtype != "f32" && h.dtype != "i16")
        throw io_error("unsupported dtype '" + h.dtype + "': " + header_path.string());
    return h;
}

std::string raw_name_for(const std::filesystem::path& header_path) {
    std::filesystem::path p = header_path.filename();
    p.replace_extension(".raw");
    return p.string();
}

} // namespace

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw io_error("cannot open for writing: " + tmp.string());
        os << text;
        if (!os) throw io_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_volume(const std::filesystem::path& header_path, const Volume& vol) {
    vol.validate();
    const std::string raw_name = raw_name_for(header_path);
    std::vector<float> stored(vol.data.size());
    for (std::size_t i = 0; i < stored.size(); ++i) stored[i] = static_cast<float>(vol.data[i]);
    write_raw(header_path.parent_path() / raw_name, stored);
    write_text(header_path,
               header_common(vol.dims, vol.spacing, vol.origin, "f32", raw_name).dump(2) + "\n");
}

void write_volume(const std::filesystem::path& header_path, const LabelMap& labels) {
    labels.validate();
    const std::string raw_name = raw_name_for(header_path);
    write_raw(header_path.parent_path() / raw_name, labels.labels);
    write_text(header_path,
               header_common(labels.dims, labels.spacing, labels.origin, "i16", raw_name).dump(2) +
                   "\n");
}

AnyVolume read_volume(const std::filesystem::path& header_path) {
    const ParsedHeader h = parse_header(header_path);
    if (h.dtype == "f32") {
        Volume v;
        v.dims = h.dims;
        v.spacing = h.spacing;
        v.origin = h.origin;
        const auto stored = read_raw<float>(h.raw_path, h.dims.voxels());
        v.data.assign(stored.begin(), stored.end());
        return v;
    }
    LabelMap m;
    m.dims = h.dims;
    m.spacing = h.spacing;
    m.origin = h.origin;
    m.labels = read_raw<std::int16_t>(h.raw_path, h.dims.voxels());
    m.recompute_label_set();
    return m;
}

Volume read_scalar_volume(const std::filesystem::path& header_path) {
    AnyVolume v = read_volume(header_path);
    if (!std::holds_alternative<Volume>(v))
        throw io_error("expected scalar volume: " + header_path.string());
    return std::get<Volume>(std::move(v));
}

LabelMap read_label_volume(const std::filesystem::path& header_path) {
    AnyVolume v = read_volume(header_path);
    if (!std::holds_alternative<LabelMap>(v))
        throw io_error("expected label volume: " + header_path.string());
    return std::get<LabelMap>(std::move(v));
}

void write_field(const std::filesystem::path& header_path, const DisplacementField& field) {
    const std::string stem = header_path.stem().string();
    const auto dir = header_path.parent_path();
    const std::array<std::string, 3> names = {stem + ".ux.mvol", stem + ".uy.mvol",
                                              stem + ".uz.mvol"};
    const std::array<const std::vector<double>*, 3> comps = {&field.ux, &field.uy, &field.uz};
    for (int c = 0; c < 3; ++c) {
        Volume v;
        v.dims = field.dims;
        v.spacing = field.spacing;
        v.data = *comps[c];
        write_volume(dir / names[c], v);
    }
    nlohmann::json j;
    j["dims"] = {field.dims.nx, field.dims.ny, field.dims.nz};
    j["spacing"] = {field.spacing.x, field.spacing.y, field.spacing.z};
    j["components"] = names;
    write_text(header_path, j.dump(2) + "\n");
}

DisplacementField read_field(const std::filesystem::path& header_path) {
    std::ifstream is(header_path);
    if (!is) throw io_error("cannot open header: " + header_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed field header " + header_path.string() + ": " + e.what());
    }
    DisplacementField f;
    try {
        f.dims = {j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(),
                  j.at("dims").at(2).get<int>()};
        f.spacing = {j.at("spacing").at(0).get<double>(), j.at("spacing").at(1).get<double>(),
                     j.at("spacing").at(2).get<double>()};
        const auto dir = header_path.parent_path();
        std::array<std::vector<double>*, 3> comps = {&f.ux, &f.uy, &f.uz};
        for (int c = 0; c < 3; ++c) {
            const Volume v = read_scalar_volume(dir / j.at("components").at(c).get<std::string>());
            if (!(v.dims == f.dims))
                throw io_error("field component dims mismatch: " + header_path.string());
            *comps[c] = v.data;
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed field header " + header_path.string() + ": " + e.what());
    }
    return f;
}

} // namespace mas
