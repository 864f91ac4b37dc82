#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctda/rng.hpp"

namespace ctda {

enum class ClassLabel { Normal = 0, Mass = 1, Calcification = 2 };
enum class DomainTag { Raw = 0, Lut = 1 };
enum class DatasetMode { Mixed, Augmented };

const char* to_string(ClassLabel c);
const char* to_string(DomainTag d);
const char* to_string(DatasetMode m);
ClassLabel class_from_string(const std::string& s);
DomainTag domain_from_string(const std::string& s);
DatasetMode mode_from_string(const std::string& s);

struct GeneratorConfig {
    int patch_size = 256;
    double beta_range[2] = {1.2, 1.6};
    double mass_radius_range[2] = {5.0, 45.0};
    double mass_intensity_range[2] = {0.90, 1.00};
    int calc_count_range[2] = {5, 12};
    int calc_area_side_range[2] = {15, 60};
    double calc_intensity_range[2] = {0.90, 1.00};
    std::uint64_t seed = 0;

    // Throws std::invalid_argument on empty ranges, patch_size < 16, or
    // intensity fractions outside (0, 1].
    void validate() const;
};

struct LutParams {
    double center = 0.5;
    double width = 0.15;

    void validate() const;
};

// Anisotropic Gaussian bump. Radii are the per-axis standard deviations in
// pixels; intensity_fraction is the target value of the center pixel after
// insertion.
struct MassGeometry {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius_x = 0.0;
    double radius_y = 0.0;
    double intensity_fraction = 1.0;
};

struct CalcDot {
    int x = 0;
    int y = 0;
    double intensity = 1.0;
};

// Dots are placed inside a square of side `side` whose top-left corner is
// (origin_x, origin_y); coordinates of dots are absolute patch coordinates.
struct CalcCluster {
    int origin_x = 0;
    int origin_y = 0;
    int side = 0;
    std::vector<CalcDot> dots;
};

struct Provenance {
    std::uint64_t seed = 0;
    double beta = 0.0;
    std::optional<MassGeometry> mass;
    std::optional<CalcCluster> calc;
};

struct Patch {
    int side = 0;
    std::vector<double> pixels;  // row-major, every value in [0,1]
    ClassLabel label = ClassLabel::Normal;
    DomainTag domain = DomainTag::Raw;
    Provenance provenance;

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * side + x]; }
};

// Transfer function of the spectral shaping filter at signed integer
// frequencies (u, v); the zero-frequency value is pinned to 0.
double power_law_filter(double u, double v, double beta);

// Gaussian random field with a power-law spectrum, min-max normalized to
// [0,1]. Rejects beta < 0 and constant pre-normalization fields.
Patch sample_texture(const GeneratorConfig& config, double beta, std::uint64_t seed);

MassGeometry sample_mass_geometry(const GeneratorConfig& config, RandomStream& rng);
CalcCluster sample_calc_cluster(const GeneratorConfig& config, RandomStream& rng);

// Adds the bump (additive, then clipped to [0,1]); relabels the patch Mass.
Patch insert_mass(const Patch& patch, const MassGeometry& geometry);

// Overwrites radius-1 discs at the cluster dots; relabels Calcification.
Patch insert_calcifications(const Patch& patch, const CalcCluster& cluster);

// Raw sigmoid value before endpoint rescaling; apply_lut maps [0,1]
// onto [0,1] with this curve and retags the patch. Double application
// (input already Lut) is rejected.
double lut_sigmoid(double p, const LutParams& params);
Patch apply_lut(const Patch& patch, const LutParams& params);

// Full synthesis of one base patch from its per-patch seed: beta and lesion
// parameters are drawn from the seeded stream, so (config, label, seed)
// reproduces the patch bit-exactly.
Patch make_patch(const GeneratorConfig& config, ClassLabel label, std::uint64_t seed);

inline std::uint64_t per_patch_seed(std::uint64_t base_seed, std::uint64_t index) {
    return base_seed ^ splitmix64(index);
}

struct DatasetRecord {
    std::string file;
    ClassLabel label = ClassLabel::Normal;
    DomainTag domain = DomainTag::Raw;
    std::uint64_t base_index = 0;
    std::uint64_t seed = 0;
    double beta = 0.0;
    std::optional<MassGeometry> mass;
    std::optional<CalcCluster> calc;
};

struct Manifest {
    int schema_version = 1;
    GeneratorConfig generator;
    LutParams lut;
    DatasetMode mode = DatasetMode::Mixed;
    std::uint64_t split_seed = 0;
    std::vector<DatasetRecord> records;
};

// Writes manifest.json + patches/<index>.png under out_dir. Mixed mode
// assigns one domain per base patch by a seeded case-level coin flip;
// augmented mode emits both domains per base patch. n_patches must be
// divisible by 3.
Manifest generate_dataset(const GeneratorConfig& config, const LutParams& lut, int n_patches, DatasetMode mode,
                          std::uint64_t split_seed, const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dataset_dir);
void write_manifest(const Manifest& manifest, const std::filesystem::path& dataset_dir);

// Re-synthesizes the pixels of one record from its provenance (quantized the
// same way as the stored PNG).
std::vector<double> regenerate_record(const Manifest& manifest, const DatasetRecord& record);

// Radially averaged power-spectrum slope of a patch in log-log coordinates,
// fit over integer frequency rings [r_min, r_max].
double spectrum_slope(const std::vector<double>& pixels, int side, int r_min, int r_max);

// Ring-averaged power accumulation used for the multi-seed slope estimate.
std::vector<double> spectrum_ring_power(const std::vector<double>& pixels, int side, int r_min, int r_max);
double fit_loglog_slope(const std::vector<double>& ring_power, int r_min);

enum class AugmentOp { Identity, FlipHorizontal, FlipVertical, Rotate90, Rotate180, Rotate270 };
std::vector<double> augment_pixels(const std::vector<double>& pixels, int side, AugmentOp op);
Patch augment_patch(const Patch& patch, AugmentOp op);

}  // namespace ctda
