// Optional dependency: present only when pretrained ONNX backends are
// installed. Typed as any so the dynamic imports compile without it.
declare module 'onnxruntime-node' {
  const ort: any
  export = ort
}
