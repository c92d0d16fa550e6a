// File formats: task datasets and parameter vectors (binary, little-endian),
// trace CSV, and run metadata JSON. Layouts are documented next to their
// writers; all scalars round-trip bit-exactly.

#pragma once

#include "precopt/network.hpp"
#include "precopt/optim.hpp"
#include "precopt/precision.hpp"
#include "precopt/taskgen.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace precopt::io {

inline constexpr std::uint32_t dataset_magic = 0x50435444;  // "DTCP" on disk
inline constexpr std::uint32_t params_magic = 0x50435057;   // "WPCP" on disk
inline constexpr std::uint32_t format_version = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("unexpected end of file");
    return value;
}

// config block: input_dim, output_dim, hidden count + sizes, activation
inline void write_config(std::ostream& out, const NetworkConfig& config) {
    write_pod<std::uint64_t>(out, config.input_dim);
    write_pod<std::uint64_t>(out, config.output_dim);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config.hidden_sizes.size()));
    for (const std::size_t h : config.hidden_sizes) write_pod<std::uint64_t>(out, h);
    write_pod<std::uint8_t>(
        out, config.activation.type == ActivationType::SymmetricSigmoid ? 0 : 1);
    write_pod<double>(out, config.activation.leak);
}

inline NetworkConfig read_config(std::istream& in) {
    NetworkConfig config;
    config.input_dim = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    config.output_dim = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    const auto hidden = read_pod<std::uint32_t>(in);
    config.hidden_sizes.resize(hidden);
    for (auto& h : config.hidden_sizes)
        h = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    config.activation.type = read_pod<std::uint8_t>(in) == 0
                                 ? ActivationType::SymmetricSigmoid
                                 : ActivationType::LeakySigmoid;
    config.activation.leak = read_pod<double>(in);
    return config;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    return in;
}

}  // namespace detail

/// Task file layout: magic, version, config block, nonlinearity degree,
/// pattern count, task seed, teacher seed, profile, generation precision,
/// var_y, then inputs (P x input_dim) and targets (P x output_dim) as
/// little-endian doubles, row-major.
inline void write_dataset(const std::filesystem::path& path, const TaskSpec& spec,
                          const Dataset& dataset) {
    auto out = detail::open_out(path);
    detail::write_pod(out, dataset_magic);
    detail::write_pod(out, format_version);
    detail::write_config(out, spec.config);
    detail::write_pod<double>(out, spec.nonlinearity);
    detail::write_pod<std::uint64_t>(out, spec.pattern_count);
    detail::write_pod<std::uint64_t>(out, spec.seed);
    detail::write_pod<std::uint64_t>(out, dataset.teacher_seed);
    detail::write_pod<std::uint8_t>(out, spec.profile == TaskProfile::Moderate ? 0 : 1);
    detail::write_pod<std::uint8_t>(
        out, dataset.generation_precision == PrecisionMode::Single ? 0 : 1);
    detail::write_pod<double>(out, dataset.var_y);
    out.write(reinterpret_cast<const char*>(dataset.inputs.data.data()),
              static_cast<std::streamsize>(dataset.inputs.data.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(dataset.targets.data.data()),
              static_cast<std::streamsize>(dataset.targets.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct LoadedTask {
    TaskSpec spec;
    Dataset dataset;
};

inline LoadedTask read_dataset(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    if (detail::read_pod<std::uint32_t>(in) != dataset_magic)
        throw std::runtime_error("not a task file: " + path.string());
    if (detail::read_pod<std::uint32_t>(in) != format_version)
        throw std::runtime_error("unsupported task file version: " + path.string());
    LoadedTask loaded;
    loaded.spec.config = detail::read_config(in);
    loaded.spec.nonlinearity = detail::read_pod<double>(in);
    loaded.spec.pattern_count = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(in));
    loaded.spec.seed = detail::read_pod<std::uint64_t>(in);
    loaded.dataset.teacher_seed = detail::read_pod<std::uint64_t>(in);
    loaded.spec.profile =
        detail::read_pod<std::uint8_t>(in) == 0 ? TaskProfile::Moderate : TaskProfile::Strong;
    loaded.dataset.generation_precision = detail::read_pod<std::uint8_t>(in) == 0
                                              ? PrecisionMode::Single
                                              : PrecisionMode::Double;
    loaded.dataset.var_y = detail::read_pod<double>(in);
    const std::size_t patterns = loaded.spec.pattern_count;
    loaded.dataset.inputs = Matrix<double>(patterns, loaded.spec.config.input_dim);
    loaded.dataset.targets = Matrix<double>(patterns, loaded.spec.config.output_dim);
    in.read(reinterpret_cast<char*>(loaded.dataset.inputs.data.data()),
            static_cast<std::streamsize>(loaded.dataset.inputs.data.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(loaded.dataset.targets.data.data()),
            static_cast<std::streamsize>(loaded.dataset.targets.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated task file: " + path.string());
    return loaded;
}

/// Parameter file layout: magic, version, config block, precision tag,
/// seed, count, then the flat weight array in the stored precision.
template <typename S>
void write_params(const std::filesystem::path& path, const NetworkConfig& config,
                  std::uint64_t seed, std::span<const S> params) {
    auto out = detail::open_out(path);
    detail::write_pod(out, params_magic);
    detail::write_pod(out, format_version);
    detail::write_config(out, config);
    detail::write_pod<std::uint8_t>(
        out, precision_of<S> == PrecisionMode::Single ? 0 : 1);
    detail::write_pod<std::uint64_t>(out, seed);
    detail::write_pod<std::uint64_t>(out, params.size());
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(S)));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename S>
struct LoadedParams {
    NetworkConfig config;
    std::uint64_t seed = 0;
    std::vector<S> values;
};

template <typename S>
LoadedParams<S> read_params(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    if (detail::read_pod<std::uint32_t>(in) != params_magic)
        throw std::runtime_error("not a parameter file: " + path.string());
    if (detail::read_pod<std::uint32_t>(in) != format_version)
        throw std::runtime_error("unsupported parameter file version: " + path.string());
    LoadedParams<S> loaded;
    loaded.config = detail::read_config(in);
    const auto tag = detail::read_pod<std::uint8_t>(in);
    const auto expected = precision_of<S> == PrecisionMode::Single ? 0 : 1;
    if (tag != expected)
        throw std::runtime_error("parameter file precision does not match: " + path.string());
    loaded.seed = detail::read_pod<std::uint64_t>(in);
    const auto count = detail::read_pod<std::uint64_t>(in);
    loaded.values.resize(count);
    in.read(reinterpret_cast<char*>(loaded.values.data()),
            static_cast<std::streamsize>(count * sizeof(S)));
    if (!in) throw std::runtime_error("truncated parameter file: " + path.string());
    return loaded;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// std::stod throws out_of_range on subnormals (strtod sets ERANGE); parse
// without that surprise but still reject non-numeric fields
inline double parse_double(const std::string& field) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str()) throw std::runtime_error("bad numeric field: " + field);
    return v;
}

}  // namespace detail

inline constexpr std::string_view trace_csv_header =
    "run_id,iteration,epoch_equivalents,mse,q,grad_norm,ls_evals,accepted_step";

/// One CSV row per trace record, doubles printed round-trippably (%.17g).
inline void write_trace_csv(const std::filesystem::path& path, std::string_view run_id,
                            const std::vector<TraceRecord>& trace) {
    auto out = detail::open_out(path);
    out << trace_csv_header << '\n';
    for (const TraceRecord& r : trace) {
        out << run_id << ',' << r.iteration << ',' << r.epoch_equivalents << ','
            << detail::format_double(r.mse) << ',' << detail::format_double(r.q) << ','
            << detail::format_double(r.gradient_norm) << ',' << r.ls_evals << ','
            << detail::format_double(r.accepted_step) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct LoadedTrace {
    std::string run_id;
    std::vector<TraceRecord> records;
};

inline LoadedTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != trace_csv_header)
        throw std::runtime_error("bad trace header: " + path.string());
    LoadedTrace loaded;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        TraceRecord r;
        std::getline(ss, field, ',');
        if (loaded.run_id.empty())
            loaded.run_id = field;
        else if (loaded.run_id != field)
            throw std::runtime_error("mixed run ids in trace: " + path.string());
        std::getline(ss, field, ',');
        r.iteration = std::stol(field);
        std::getline(ss, field, ',');
        r.epoch_equivalents = std::stol(field);
        std::getline(ss, field, ',');
        r.mse = detail::parse_double(field);
        std::getline(ss, field, ',');
        r.q = detail::parse_double(field);
        std::getline(ss, field, ',');
        r.gradient_norm = detail::parse_double(field);
        std::getline(ss, field, ',');
        r.ls_evals = std::stol(field);
        if (!std::getline(ss, field, ','))
            throw std::runtime_error("short trace row: " + path.string());
        r.accepted_step = detail::parse_double(field);
        loaded.records.push_back(r);
    }
    return loaded;
}

/// Plain CSV dump of a dataset for eyeballing; not meant to round-trip.
inline void export_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
    auto out = detail::open_out(path);
    out << "pattern";
    for (std::size_t i = 0; i < dataset.inputs.cols; ++i) out << ",x" << i;
    for (std::size_t m = 0; m < dataset.targets.cols; ++m) out << ",y" << m;
    out << '\n';
    for (std::size_t p = 0; p < dataset.inputs.rows; ++p) {
        out << p;
        for (std::size_t i = 0; i < dataset.inputs.cols; ++i)
            out << ',' << detail::format_double(dataset.inputs(p, i));
        for (std::size_t m = 0; m < dataset.targets.cols; ++m)
            out << ',' << detail::format_double(dataset.targets(p, m));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace precopt::io
