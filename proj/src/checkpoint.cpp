#include "specrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "byte_order.hpp"
#include "specrec/error.hpp"

namespace specrec {

namespace {

constexpr char kMagic[16] = {'S', 'P', 'E', 'C', 'R', 'E', 'C', '-', 'T', 'E', 'N', 'S', 'O', 'R', 'S', '\0'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    if constexpr (!detail::kLittleEndianHost) v = detail::byteswap(v);
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.insert(out.end(), buf, buf + sizeof(U));
}

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        if constexpr (!detail::kLittleEndianHost) v = detail::byteswap(v);
        return v;
    }

    std::string str() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw LoadError("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " + std::to_string(n) +
                            " more)");
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::size_t element_size(StoredType t) { return t == StoredType::f32 ? 4 : 8; }

} // namespace

void TensorArchive::add(const std::string& name, StoredType dtype, ad::Shape shape, std::vector<double> values) {
    if (ad::numel(shape) != values.size()) {
        throw ArgumentError("archive tensor '" + name + "': shape " + ad::to_string(shape) + " does not hold " +
                            std::to_string(values.size()) + " values");
    }
    if (find(name)) throw ArgumentError("archive tensor '" + name + "' added twice");
    tensors.push_back({name, dtype, std::move(shape), std::move(values)});
}

template <typename T>
void TensorArchive::add(const std::string& name, const ad::Tensor<T>& t) {
    const auto v = t.values();
    add(name, std::is_same_v<T, float> ? StoredType::f32 : StoredType::f64, t.shape(),
        std::vector<double>(v.begin(), v.end()));
}

const StoredTensor* TensorArchive::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const StoredTensor& TensorArchive::at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw LoadError("checkpoint has no tensor '" + name + "'");
}

const std::string& TensorArchive::meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) throw LoadError("checkpoint has no metadata key '" + key + "'");
    return it->second;
}

template <typename T>
void TensorArchive::load_into(const std::string& name, ad::Tensor<T>& t) const {
    const auto& s = at(name);
    if (s.shape != t.shape()) {
        throw LoadError("checkpoint tensor '" + name + "' has shape " + ad::to_string(s.shape) + ", model expects " +
                        ad::to_string(t.shape()));
    }
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s.values[i]);
}

template void TensorArchive::add<float>(const std::string&, const ad::Tensor<float>&);
template void TensorArchive::add<double>(const std::string&, const ad::Tensor<double>&);
template void TensorArchive::load_into<float>(const std::string&, ad::Tensor<float>&) const;
template void TensorArchive::load_into<double>(const std::string&, ad::Tensor<double>&) const;

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, TensorArchive::kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.metadata.size()));
    for (const auto& [k, v] : archive.metadata) {
        put_str(out, k);
        put_str(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const auto& t : archive.tensors) {
        put_str(out, t.name);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put<std::uint64_t>(out, d);
        put<std::uint64_t>(out, t.values.size() * element_size(t.dtype));
    }
    for (const auto& t : archive.tensors) {
        for (double v : t.values) {
            if (t.dtype == StoredType::f32) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            else put(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    auto magic = r.raw(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw LoadError("not a specrec checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != TensorArchive::kVersion) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version));
    }
    TensorArchive a;
    const auto n_meta = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto k = r.str();
        a.metadata[k] = r.str();
    }
    const auto n_tensors = r.get<std::uint32_t>();
    std::vector<std::uint64_t> sizes;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        StoredTensor t;
        t.name = r.str();
        const auto dt = r.get<std::uint8_t>();
        if (dt > 1) throw LoadError("tensor '" + t.name + "': unknown dtype code " + std::to_string(dt));
        t.dtype = static_cast<StoredType>(dt);
        const auto ndim = r.get<std::uint32_t>();
        if (ndim > 16) throw LoadError("tensor '" + t.name + "': implausible rank " + std::to_string(ndim));
        for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(r.get<std::uint64_t>());
        const auto nbytes = r.get<std::uint64_t>();
        if (nbytes != ad::numel(t.shape) * element_size(t.dtype)) {
            throw LoadError("tensor '" + t.name + "': byte length " + std::to_string(nbytes) + " does not match shape " +
                            ad::to_string(t.shape));
        }
        a.tensors.push_back(std::move(t));
    }
    for (auto& t : a.tensors) {
        const std::size_t n = ad::numel(t.shape);
        t.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            t.values[i] = t.dtype == StoredType::f32 ? double(std::bit_cast<float>(r.get<std::uint32_t>()))
                                                     : std::bit_cast<double>(r.get<std::uint64_t>());
        }
    }
    if (!r.done()) throw LoadError("trailing bytes after checkpoint payloads");
    return a;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
    const auto bytes = encode_archive(archive);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_archive(bytes);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

} // namespace specrec
