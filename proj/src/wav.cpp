#include "mclp/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mclp/error.hpp"

namespace mclp {

namespace {

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open wav file");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw IoError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const char* id = bytes.data() + pos;
    const std::uint32_t len = get_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > n)
      throw IoError(path + ": truncated chunk '" + std::string(id, 4) + "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw IoError(path + ": fmt chunk too small");
      format = get_u16(p + body);
      channels = get_u16(p + body + 2);
      sample_rate = get_u32(p + body + 4);
      bits = get_u16(p + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (data == nullptr) throw IoError(path + ": no data chunk");
  if (channels == 0) throw IoError(path + ": zero channels");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw IoError(path + ": unsupported encoding (format " +
                  std::to_string(format) + ", " + std::to_string(bits) +
                  " bits); expected 16-bit PCM or 32-bit float");

  const std::uint32_t bytes_per = bits / 8;
  const std::uint32_t frame_size = bytes_per * channels;
  const std::uint32_t frames = data_len / frame_size;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(frames);
  for (std::uint32_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + i * frame_size + c * bytes_per;
      if (pcm16) {
        const std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t u = get_u32(s);
        float f;
        std::memcpy(&f, &u, 4);
        acc += static_cast<double>(f);
      }
    }
    // Keep the value on the f32 grid after channel averaging.
    clip.samples[i] = static_cast<double>(
        static_cast<float>(acc / static_cast<double>(channels)));
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip,
               WavFormat format) {
  if (clip.sample_rate <= 0) throw InputError("write_wav: no sample rate");
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint32_t data_len = n * (bits / 8);

  std::string out;
  out.reserve(44 + data_len);
  out.append("RIFF");
  put_u32(out, 36 + data_len);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, format == WavFormat::pcm16 ? 1 : 3);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out.append("data");
  put_u32(out, data_len);
  for (const double v : clip.samples) {
    if (format == WavFormat::pcm16) {
      double x = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
      const auto q = static_cast<std::int16_t>(std::lround(x * 32767.0));
      put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path + ": cannot open for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError(path + ": write failed");
}

}  // namespace mclp
