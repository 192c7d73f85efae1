#include "mclp/tensor_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "mclp/error.hpp"

namespace mclp {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::string& path;
  std::string bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw IoError(path + ": truncated tensor file while reading " +
                    std::string(what));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void write_tensor_file(const std::string& path, const NamedTensors& records,
                       std::uint32_t version) {
  if (version != kTensorFileV1F32 && version != kTensorFileV2F64)
    throw UsageError("write_tensor_file: unsupported version " +
                     std::to_string(version));
  std::string buf;
  buf.append("MCLT");
  put_u32(buf, version);
  for (const auto& [name, t] : records) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (const auto d : t.shape()) put_u64(buf, static_cast<std::uint64_t>(d));
    if (version == kTensorFileV1F32) {
      for (const double v : t.data()) put_f32(buf, static_cast<float>(v));
    } else {
      for (const double v : t.data()) put_f64(buf, v);
    }
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError(tmp + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError(path + ": rename from temp file failed");
}

NamedTensors read_tensor_file(const std::string& path,
                              std::uint32_t* version_out) {
  Reader r{path, {}, 0};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    r.bytes = std::move(bytes);
  }
  if (r.str(4, "magic") != "MCLT")
    throw IoError(path + ": bad magic, not a tensor container");
  const std::uint32_t version = r.u32("version");
  if (version != kTensorFileV1F32 && version != kTensorFileV2F64)
    throw IoError(path + ": file format version " + std::to_string(version) +
                  ", this reader supports versions 1 and 2");
  if (version_out != nullptr) *version_out = version;

  NamedTensors records;
  while (!r.eof()) {
    const std::uint32_t name_len = r.u32("record name length");
    const std::string name = r.str(name_len, "record name");
    const std::uint32_t rank = r.u32("record rank");
    Shape shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::int64_t>(r.u64("record dims"));
      numel *= shape[i];
    }
    std::vector<double> data(static_cast<std::size_t>(numel));
    if (version == kTensorFileV1F32) {
      for (auto& v : data) {
        const std::uint32_t bits = r.u32("f32 payload");
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
      }
    } else {
      for (auto& v : data) {
        const std::uint64_t bits = r.u64("f64 payload");
        double d;
        std::memcpy(&d, &bits, 8);
        v = d;
      }
    }
    records.emplace_back(name,
                         Tensor::from_data(std::move(shape), std::move(data)));
  }
  return records;
}

}  // namespace mclp
