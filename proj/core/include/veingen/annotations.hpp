#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "veingen/errors.hpp"
#include "veingen/fingermodel.hpp"
#include "veingen/renderer.hpp"
#include "veingen/variations.hpp"

namespace veingen {

struct AnnotationParseError : IntegrityError {
    using IntegrityError::IntegrityError;
};
struct AnnotationSchemaError : IntegrityError {
    using IntegrityError::IntegrityError;
};
struct AnnotationRangeError : IntegrityError {
    using IntegrityError::IntegrityError;
};

// Per-sample ground truth. Joint and ROI geometry are in the sample's own
// frame; base_roi is the identity's untransformed crop box, kept so readers
// can align samples without regenerating anything.
struct AnnotationRecord {
    int identity = 0;
    int sample = 0;
    std::string image_path;
    std::string pattern_mask_path;
    std::string shape_mask_path;
    std::vector<Joint> joints; // amplitude is not serialized
    RoiBox roi;
    RoiBox base_roi;
    VariationParams params;
};

std::string annotation_to_xml(const AnnotationRecord& rec);
// Throws AnnotationParseError on malformed XML, AnnotationSchemaError on
// missing or unknown structure, AnnotationRangeError on out-of-range values.
AnnotationRecord annotation_from_xml(const std::string& xml);

void write_annotation(const std::filesystem::path& path,
                      const AnnotationRecord& rec);
AnnotationRecord read_annotation(const std::filesystem::path& path);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file(const std::filesystem::path& path);

struct ManifestEntry {
    std::string sha256;
    std::uint64_t size = 0;
    std::string path; // relative, '/'-separated
};

struct Manifest {
    std::uint64_t master_seed = 0;
    std::string config_sha256;
    int identities = 0;
    int samples_per_identity = 0;
    std::vector<int> failed_identities;
    std::vector<ManifestEntry> entries; // sorted by path
};

// Walks the dataset, hashes every payload file, and checks completeness
// against the expected layout (identity directories, per-sample images and
// annotations, per-identity masks). Missing files raise IntegrityError
// naming the gaps. suffixes lists the expected per-sample image endings,
// e.g. {".png", "_roi.png"}; ".xml" is always expected.
Manifest build_manifest(const std::filesystem::path& root,
                        std::uint64_t master_seed,
                        const std::string& config_sha256, int identities,
                        int samples_per_identity,
                        const std::vector<std::string>& suffixes,
                        const std::vector<int>& failed_identities = {});

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct VerifyReport {
    int files_checked = 0;
    std::uint64_t bytes_checked = 0;
};

// Re-hashes everything listed in the dataset's manifest and scans for
// unlisted files. Throws IntegrityError describing every problem found.
VerifyReport verify_dataset(const std::filesystem::path& root);

} // namespace veingen
