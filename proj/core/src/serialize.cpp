#include "msat/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace msat {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'A', 'T'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

void put_u16(std::ostream& out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void read_bytes(std::istream& in, void* dst, size_t len, const std::string& context,
                const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    MSAT_REQUIRE(static_cast<size_t>(in.gcount()) == len, context, ": truncated ", what);
}

uint16_t get_u16(std::istream& in, const std::string& context, const char* what) {
    unsigned char b[2];
    read_bytes(in, b, 2, context, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in, const std::string& context, const char* what) {
    unsigned char b[4];
    read_bytes(in, b, 4, context, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

Shape read_header(std::istream& in, const std::string& context) {
    char magic[4];
    read_bytes(in, magic, 4, context, "header");
    MSAT_REQUIRE(std::memcmp(magic, kMagic, 4) == 0, context, ": bad magic");
    const uint16_t version = get_u16(in, context, "version");
    MSAT_REQUIRE(version == kVersion, context, ": unsupported version ", version);
    unsigned char dtype_rank[2];
    read_bytes(in, dtype_rank, 2, context, "dtype/rank");
    MSAT_REQUIRE(dtype_rank[0] == kDtypeF32, context, ": unsupported dtype ",
                 static_cast<int>(dtype_rank[0]));
    Shape shape;
    for (int i = 0; i < dtype_rank[1]; ++i) {
        const uint32_t d = get_u32(in, context, "extent");
        MSAT_REQUIRE(d > 0 && d <= static_cast<uint32_t>(std::numeric_limits<int>::max()),
                     context, ": invalid extent ", d);
        shape.push_back(static_cast<int>(d));
    }
    return shape;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_u16(out, kVersion);
    const unsigned char dtype_rank[2] = {kDtypeF32, static_cast<unsigned char>(t.rank())};
    out.write(reinterpret_cast<const char*>(dtype_rank), 2);
    for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    for (float v : t.data()) put_u32(out, std::bit_cast<uint32_t>(v));
}

Tensor read_tensor(std::istream& in, const std::string& context) {
    const Shape shape = read_header(in, context);
    const int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        data[static_cast<size_t>(i)] = std::bit_cast<float>(get_u32(in, context, "payload"));
    return Tensor::from_data(shape, std::move(data));
}

void save_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    MSAT_REQUIRE(out.good(), path, ": cannot open for writing");
    write_tensor(out, t);
    MSAT_REQUIRE(out.good(), path, ": write failed");
}

Tensor load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    return read_tensor(in, path);
}

Shape read_tensor_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    return read_header(in, path);
}

void save_tensor_sequence(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    MSAT_REQUIRE(out.good(), path, ": cannot open for writing");
    for (const auto& nt : tensors) {
        MSAT_REQUIRE(nt.name.size() <= std::numeric_limits<uint16_t>::max(),
                     path, ": tensor name too long: ", nt.name);
        put_u16(out, static_cast<uint16_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_tensor(out, nt.tensor);
    }
    MSAT_REQUIRE(out.good(), path, ": write failed");
}

std::vector<NamedTensor> load_tensor_sequence(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    std::vector<NamedTensor> out;
    while (true) {
        const int c = in.peek();
        if (c == std::char_traits<char>::eof()) break;
        const uint16_t len = get_u16(in, path, "name length");
        std::string name(len, '\0');
        read_bytes(in, name.data(), len, path, "name");
        Tensor t = read_tensor(in, path + " [" + name + "]");
        out.push_back({std::move(name), std::move(t)});
    }
    return out;
}

std::vector<NamedTensor> named_values(const ParamRefs& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back({p->name, p->value});
    return out;
}

void assign_named_values(const std::vector<NamedTensor>& tensors, const ParamRefs& params) {
    for (Parameter* p : params) {
        const NamedTensor* found = nullptr;
        for (const auto& nt : tensors) {
            if (nt.name == p->name) {
                MSAT_REQUIRE(!found, "duplicate tensor record '", p->name, "'");
                found = &nt;
            }
        }
        MSAT_REQUIRE(found, "missing tensor record '", p->name, "'");
        MSAT_REQUIRE(found->tensor.shape() == p->value.shape(), "tensor record '", p->name,
                     "' shape ", shape_str(found->tensor.shape()),
                     " does not match parameter shape ", shape_str(p->value.shape()));
        p->value.data() = found->tensor.data();
    }
}

}  // namespace msat
