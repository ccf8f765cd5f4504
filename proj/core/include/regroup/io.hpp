#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "regroup/attacks.hpp"
#include "regroup/dataset.hpp"
#include "regroup/network.hpp"
#include "regroup/regroup.hpp"

namespace regroup {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kEnsembleFormatVersion = 1;
inline constexpr std::uint32_t kAdversarialFormatVersion = 1;

// Datasets. Pixels are scaled by 1/255.

/// IDX image/label pair (big-endian headers, magics 0x803 and 0x801).
LabeledDataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                          Provenance provenance = Provenance::test);

/// Concatenation of CIFAR-10 binary batches (1 label byte + R, G, B planes).
LabeledDataset load_cifar10(std::span<const std::filesystem::path> batches,
                            Provenance provenance = Provenance::test);

// Little-endian RGRP* formats. encode_* / decode_* work on byte buffers;
// save_* / load_* add the file I/O.

std::vector<std::uint8_t> encode_model(const NetworkModel& model);
NetworkModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_ensemble(const GenerativeEnsemble& ensemble);
GenerativeEnsemble decode_ensemble(std::span<const std::uint8_t> bytes);
void save_ensemble(const GenerativeEnsemble& ensemble, const std::filesystem::path& path);
GenerativeEnsemble load_ensemble(const std::filesystem::path& path);

/// Records carry no image shape; the reader takes it from the caller (the
/// model's input shape) and checks it against the file length.
std::vector<std::uint8_t> encode_adversarial_set(std::span<const AdversarialRecord> records);
std::vector<AdversarialRecord> decode_adversarial_set(std::span<const std::uint8_t> bytes, const Shape& image_shape);
void save_adversarial_set(std::span<const AdversarialRecord> records, const std::filesystem::path& path);
std::vector<AdversarialRecord> load_adversarial_set(const std::filesystem::path& path, const Shape& image_shape);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace regroup
