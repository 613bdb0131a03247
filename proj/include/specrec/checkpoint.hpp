#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "specrec/tensor.hpp"

namespace specrec {

enum class StoredType : std::uint8_t { f32 = 0, f64 = 1 };

struct StoredTensor {
    std::string name;
    StoredType dtype = StoredType::f32;
    ad::Shape shape;
    std::vector<double> values; // widened in memory; narrowed to dtype on disk
};

/// Named-tensor container. Layout (little-endian):
///   "SPECREC-TENSORS\0", u32 version,
///   u32 n_meta, n_meta x (str key, str value),
///   u32 n_tensors, n_tensors x (str name, u8 dtype, u32 ndim, ndim x u64 dim, u64 bytes),
///   payloads in table order.
/// str = u32 length + bytes.
struct TensorArchive {
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> metadata;
    std::vector<StoredTensor> tensors;

    template <typename T>
    void add(const std::string& name, const ad::Tensor<T>& t);
    void add(const std::string& name, StoredType dtype, ad::Shape shape, std::vector<double> values);

    const StoredTensor* find(const std::string& name) const;
    const StoredTensor& at(const std::string& name) const; // LoadError when absent
    const std::string& meta(const std::string& key) const; // LoadError when absent

    // Copies into an existing tensor; LoadError on shape mismatch.
    template <typename T>
    void load_into(const std::string& name, ad::Tensor<T>& t) const;
};

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::span<const std::uint8_t> bytes); // LoadError on corruption

void save_archive(const TensorArchive& archive, const std::filesystem::path& path); // IoError
TensorArchive load_archive(const std::filesystem::path& path);                       // LoadError

} // namespace specrec
