#include <sstream>

#include "epigraph/error.hpp"
#include "epigraph/nn.hpp"

namespace epigraph::nn {

namespace {

constexpr const char* kHeader = "# epigraph-ckpt v1";

void append_values(std::string& out, const char* tag, const DenseMatrix& m) {
  out += tag;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out += ' ';
    out += format_double(m.data()[i]);
  }
  out += '\n';
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::vector<std::string> next(const char* expect) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      auto tok = split_ws(line);
      if (tok.empty()) continue;
      if (expect && tok[0] != expect) fail(std::string("expected '") + expect + "', found '" + tok[0] + "'");
      return tok;
    }
    fail(std::string("unexpected end of checkpoint, expected '") + (expect ? expect : "") + "'");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kParse, "checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

  int line_no() const { return line_no_; }
  std::istringstream& stream() { return in_; }
  void count_line() { ++line_no_; }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

int to_int(LineReader& r, const std::string& tok, const char* what) {
  try {
    return static_cast<int>(parse_int(tok, what));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

void read_values(LineReader& r, const char* tag, DenseMatrix& m) {
  const auto tok = r.next(tag);
  if (static_cast<Eigen::Index>(tok.size()) != m.size() + 1) {
    r.fail(std::string(tag) + " has " + std::to_string(tok.size() - 1) + " values, expected " +
           std::to_string(m.size()));
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    try {
      m.data()[i] = parse_double(tok[static_cast<std::size_t>(i) + 1], tag);
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
}

}  // namespace

std::string format_checkpoint(const Model& model, const std::map<std::string, std::string>& meta) {
  const ModelConfig& c = model.config();
  std::string out = std::string(kHeader) + "\n";
  out += "preset " + (c.preset.empty() ? std::string("-") : c.preset) + "\n";
  out += std::string("pooling ") + pooling_name(c.pooling) + "\n";
  out += "hidden " + std::to_string(c.hidden) + "\n";
  out += "layers " + std::to_string(c.layers.size()) + "\n";
  for (const auto& l : c.layers) {
    out += std::string("layer ") + layer_kind_name(l.kind) + " " + std::to_string(l.in_dim) + " " +
           std::to_string(l.out_dim) + " " + std::to_string(l.heads) + " " +
           activation_name(l.activation) + " " + (l.bias ? "1" : "0") + "\n";
  }
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::kInvalidInput, "checkpoint meta key/value not serializable: '" + k + "'");
    }
    out += "meta " + k + " " + v + "\n";
  }
  out += "adam_step " + std::to_string(model.params().step) + "\n";
  out += "tensors " + std::to_string(model.params().size()) + "\n";
  for (const Tensor& t : model.params().tensors()) {
    out += "tensor " + t.name + " " + std::to_string(t.value.rows()) + " " +
           std::to_string(t.value.cols()) + "\n";
    append_values(out, "value", t.value);
    append_values(out, "m", t.m);
    append_values(out, "v", t.v);
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  const auto first_nl = text.find('\n');
  const std::string first = text.substr(0, first_nl);
  const auto head = split_ws(first);
  if (head.size() < 3 || head[0] != "#" || head[1] != "epigraph-ckpt") {
    throw Error(ErrorCode::kParse, "checkpoint line 1: missing '# epigraph-ckpt' header");
  }
  if (head[2] != "v1") {
    throw Error(ErrorCode::kSchema, "unsupported checkpoint version '" + head[2] + "'");
  }
  LineReader r(first_nl == std::string::npos ? std::string() : text.substr(first_nl + 1));

  ModelConfig c;
  auto tok = r.next("preset");
  if (tok.size() != 2) r.fail("preset needs one value");
  c.preset = tok[1] == "-" ? std::string() : tok[1];
  tok = r.next("pooling");
  if (tok.size() != 2) r.fail("pooling needs one value");
  try {
    c.pooling = parse_pooling(tok[1]);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  tok = r.next("hidden");
  if (tok.size() != 2) r.fail("hidden needs one value");
  c.hidden = to_int(r, tok[1], "hidden");
  tok = r.next("layers");
  if (tok.size() != 2) r.fail("layers needs one value");
  const int n_layers = to_int(r, tok[1], "layers");
  for (int l = 0; l < n_layers; ++l) {
    tok = r.next("layer");
    if (tok.size() != 7) r.fail("layer needs 6 values");
    LayerSpec s;
    try {
      s.kind = parse_layer_kind(tok[1]);
      s.activation = parse_activation(tok[5]);
    } catch (const Error& e) {
      r.fail(e.what());
    }
    s.in_dim = to_int(r, tok[2], "in_dim");
    s.out_dim = to_int(r, tok[3], "out_dim");
    s.heads = to_int(r, tok[4], "heads");
    s.bias = tok[6] == "1";
    c.layers.push_back(s);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchema, std::string("checkpoint model config invalid: ") + e.what());
  }

  Checkpoint ck{Model(c, 0), {}};
  std::string line;
  long step = 0;
  int n_tensors = -1;
  while (std::getline(r.stream(), line)) {
    r.count_line();
    if (line.empty()) continue;
    auto t = split_ws(line);
    if (t.empty()) continue;
    if (t[0] == "meta") {
      if (t.size() < 2) r.fail("meta needs a key");
      const auto key_pos = line.find(t[1]);
      const auto val_pos = line.find_first_not_of(" \t", key_pos + t[1].size());
      ck.meta[t[1]] = val_pos == std::string::npos ? std::string() : line.substr(val_pos);
    } else if (t[0] == "adam_step") {
      if (t.size() != 2) r.fail("adam_step needs one value");
      step = to_int(r, t[1], "adam_step");
    } else if (t[0] == "tensors") {
      if (t.size() != 2) r.fail("tensors needs one value");
      n_tensors = to_int(r, t[1], "tensors");
      break;
    } else {
      r.fail("unexpected '" + t[0] + "'");
    }
  }
  if (n_tensors < 0) r.fail("missing tensors section");
  ParamStore& params = ck.model.params();
  if (static_cast<std::size_t>(n_tensors) != params.size()) {
    throw Error(ErrorCode::kSchema, "checkpoint has " + std::to_string(n_tensors) +
                                        " tensors, model config requires " +
                                        std::to_string(params.size()));
  }
  params.step = step;
  for (int i = 0; i < n_tensors; ++i) {
    tok = r.next("tensor");
    if (tok.size() != 4) r.fail("tensor needs name rows cols");
    if (!params.contains(tok[1])) {
      throw Error(ErrorCode::kSchema, "checkpoint tensor '" + tok[1] + "' is not part of the model");
    }
    Tensor& dst = params.at(tok[1]);
    const int rows = to_int(r, tok[2], "rows");
    const int cols = to_int(r, tok[3], "cols");
    if (rows != dst.value.rows() || cols != dst.value.cols()) {
      throw Error(ErrorCode::kSchema, "checkpoint tensor '" + tok[1] + "' has shape " +
                                          std::to_string(rows) + "x" + std::to_string(cols) +
                                          ", model expects " + std::to_string(dst.value.rows()) +
                                          "x" + std::to_string(dst.value.cols()));
    }
    read_values(r, "value", dst.value);
    read_values(r, "m", dst.m);
    read_values(r, "v", dst.v);
  }
  r.next("end");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& meta) {
  write_text_file(path, format_checkpoint(model, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path));
}

}  // namespace epigraph::nn
